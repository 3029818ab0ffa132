"""Continuation a -> a*_N at eps/a*_N in {0.3, 0.2, 0.1, 0.05} with two Coulomb centers.

Prints one line per record and writes continuation.csv. Also reports the
scale-invariant blow-up coefficients M = C^2/(4D) (Coulomb point placed where
it attracts the optimizer most) that decide whether the particles collapse
together or on separate centers.

Usage: python scripts/blowup_study.py --n 2 [--n-per-axis 256 --box-length 10]
"""
import argparse
import time

import numpy as np

from fermicrit.blowup import run_continuation, write_continuation_csv
from fermicrit.critical import estimate_a_star
from fermicrit.energy import rho_power
from fermicrit.grid import make_grid
from fermicrit.potential import build_coulomb
from fermicrit.solver import SolverConfig
from fermicrit.state import density

CENTERS = [(-1.03, 0.07, 0.05), (1.52, -0.04, 0.06)]


def blowup_coefficient(gamma) -> float:
    """max_y (int rho/|x - y|)^2 / (4 int rho^{5/3}) via an FFT convolution."""
    g = gamma.grid
    rho = density(gamma)
    kernel = np.fft.ifftshift(1.0 / np.maximum(g.distance_to(g.center), g.spacing / 2))
    coul = np.real(np.fft.ifftn(np.fft.fftn(rho) * np.fft.fftn(kernel))) * g.cell_volume
    return float(coul.max() ** 2 / (4 * g.integrate(rho_power(rho, 5 / 3))))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2, choices=[2, 3])
    p.add_argument("--n-per-axis", type=int, default=256)
    p.add_argument("--box-length", type=float, default=10.0)
    p.add_argument("--out", default="continuation.csv")
    args = p.parse_args()
    crit = make_grid(48, 40.0)
    cache = {}
    est = {k: estimate_a_star(k, crit, cache=cache) for k in range(1, args.n + 1)}
    for k, e in est.items():
        print(f"a*_{k} = {e.a_star:.7f}  M_{k} = {blowup_coefficient(e.optimizer):.4f}")
    a_star = est[args.n].a_star
    g = make_grid(args.n_per_axis, args.box_length)
    pot = build_coulomb(g, CENTERS)
    t0 = time.perf_counter()

    def show(r, st):
        print(f"{time.perf_counter() - t0:7.0f}s eps={r.eps:.4f} eps*E={r.scaled_energy:.5f} "
              f"D_w={r.nonlinear_w:.4f} gap={r.energy_law_gap:.4f} "
              f"virial={r.identity_residuals['virial']:.4f} "
              f"energy_law={r.identity_residuals['energy_law']:.2e} "
              f"center={r.nearest_center_index} rank={r.rank_found} gram={r.gram_error:.2e} "
              f"mu={np.array2string(r.multipliers, precision=4)}", flush=True)

    recs = run_continuation(args.n, pot, a_star, [f * a_star for f in (0.3, 0.2, 0.1, 0.05)],
                            SolverConfig(), refine=False, on_record=show,
                            keep_rescaled=False)
    write_continuation_csv(recs, args.out)


if __name__ == "__main__":
    main()
