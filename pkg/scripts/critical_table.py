"""Estimate a*_n and L*_n for n = 1..3 on 48^3 / box 40 and print the duality table.

Usage: python scripts/critical_table.py [--n 1 2 3] [--out critical.json]
"""
import argparse
import json
import time

from fermicrit.critical import duality_check, estimate_a_star, estimate_l_star
from fermicrit.grid import make_grid
from fermicrit.oracles import DUALITY_CONSTANT, critical_ratio_radial
from fermicrit.solver import SolverConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--n-per-axis", type=int, default=48)
    p.add_argument("--box-length", type=float, default=40.0)
    p.add_argument("--skip-lt", action="store_true", help="only estimate a*_n")
    p.add_argument("--out", default=None)
    args = p.parse_args()
    grid = make_grid(args.n_per_axis, args.box_length)
    cfg = SolverConfig()
    cache, rows = {}, []
    print(f"radial oracle ratio {critical_ratio_radial().ratio:.7f}; "
          f"duality constant {DUALITY_CONSTANT:.6f}")
    for n in args.n:
        t0 = time.perf_counter()
        a = estimate_a_star(n, grid, cfg, cache=cache)
        row = {"n": n, "a_star": a.a_star, "tolerance": a.tolerance, "rank_found": a.rank_found,
               "residual": a.residual, "multipliers": [float(m) for m in a.multipliers]}
        if not args.skip_lt:
            lt = estimate_l_star(n, grid, cfg)
            row.update(l_star=lt.l_star, duality_error=duality_check(a, lt))
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
        print(json.dumps(row))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
