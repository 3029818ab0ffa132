"""Energy along the dilation family of the a*_2-optimizer at a = 1.1 a*_2.

Usage: python scripts/nonexistence_sweep.py
"""
from fermicrit.critical import estimate_a_star
from fermicrit.grid import make_grid
from fermicrit.potential import build_coulomb
from fermicrit.solver import nonexistence_demo, virial_scale


def main():
    grid = make_grid(48, 40.0)
    est = estimate_a_star(2, grid)
    pot = build_coulomb(grid, [(-1.03, 0.07, 0.05), (1.52, -0.04, 0.06)])
    print(f"a*_2 = {est.a_star:.7f}; virial scale of the optimizer {virial_scale(est.optimizer):.4f}")
    for p in nonexistence_demo(pot, 1.1 * est.a_star, [1, 2, 4, 8, 16], est.optimizer, est.a_star):
        print(f"t = {p.t:<4g} E = {p.total:12.5f}  (T {p.kinetic:.4g}, V {p.external:.4g}, "
              f"D {p.nonlinear:.4g})")


if __name__ == "__main__":
    main()
