"""One-dimensional radial reference solutions.

These are deliberately independent of the 3-D spectral machinery: they use
finite differences and ODE shooting on the half-line, and serve as oracles for
the grid-based solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh_tridiagonal

# (3/5)(2/5)^{2/3}
DUALITY_CONSTANT = 0.6 * 0.4 ** (2.0 / 3.0)


def radial_coulomb_levels(ell: int = 0, charge: float = 1.0, n_levels: int = 2,
                          r_max: float = 80.0, n_points: int = 16000) -> np.ndarray:
    """Lowest eigenvalues of -Delta - charge/|x| in angular channel ``ell``.

    Works with chi = r u on (0, r_max) with Dirichlet ends, three-point
    differences. Error is O(h^2); the defaults give ~1e-6 relative on the
    hydrogen-like levels.
    """
    h = r_max / (n_points + 1)
    r = h * np.arange(1, n_points + 1)
    diag = 2.0 / h**2 + ell * (ell + 1) / r**2 - charge / r
    off = -np.ones(n_points - 1) / h**2
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1),
                            eigvals_only=True)


def _shoot(q0: float, r_max: float):
    """Integrate Q'' + 2Q'/r - Q + Q^{7/3} = 0 from the origin.

    Returns +1 if Q crosses zero (q0 too big), -1 if Q turns back up
    (q0 too small), 0 if neither happened before r_max.
    """
    r0 = 1e-6
    y0 = [q0 + (q0 - q0 ** (7 / 3)) * r0**2 / 6.0, (q0 - q0 ** (7 / 3)) * r0 / 3.0]

    def rhs(r, y):
        q, dq = y
        return [dq, -2.0 * dq / r + q - np.sign(q) * abs(q) ** (7 / 3)]

    def crossed(r, y):
        return y[0]
    crossed.terminal = True

    def turned(r, y):
        return y[1]
    turned.terminal = True
    turned.direction = 1

    sol = solve_ivp(rhs, (r0, r_max), y0, events=(crossed, turned),
                    rtol=1e-12, atol=1e-14, dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


@dataclass(frozen=True)
class RadialProfile:
    q0: float
    r_cut: float
    kinetic: float
    mass: float
    nonlinear: float
    ratio: float


def critical_ratio_radial(r_max: float = 40.0, iters: int = 200) -> RadialProfile:
    """Best constant of inf ||u||^{4/3} int|grad u|^2 / int |u|^{10/3} in 3-D.

    The optimizer is the positive radial solution of -Q'' - 2Q'/r + Q = Q^{7/3};
    it is found by bisection on Q(0) and the ratio is evaluated by quadrature
    up to the point where the bracketing solutions separate.
    """
    lo, hi = 1.0, 10.0
    assert _shoot(lo, r_max)[0] == -1 and _shoot(hi, r_max)[0] == 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        flag, _ = _shoot(mid, r_max)
        if flag > 0:
            hi = mid
        elif flag < 0:
            lo = mid
        else:
            break
        if hi - lo < 1e-15 * hi:
            break
    _, sol_lo = _shoot(lo, r_max)
    _, sol_hi = _shoot(hi, r_max)
    # trust the profile up to where the two brackets agree
    r_cut = min(sol_lo.t[-1], sol_hi.t[-1])
    rs = np.linspace(1e-6, r_cut, 4000)
    gap = np.abs(sol_lo.sol(rs)[0] - sol_hi.sol(rs)[0])
    ok = gap < 1e-3 * np.abs(sol_lo.sol(rs)[0]) + 1e-12
    r_cut = rs[np.argmin(ok)] if not ok.all() else r_cut
    prof = sol_lo.sol

    def integ(fn):
        return 4 * np.pi * quad(lambda r: fn(r) * r * r, 1e-6, r_cut, limit=400,
                                epsabs=1e-14, epsrel=1e-12)[0]

    kinetic = integ(lambda r: prof(r)[1] ** 2)
    mass = integ(lambda r: prof(r)[0] ** 2)
    nonlinear = integ(lambda r: abs(prof(r)[0]) ** (10 / 3))
    ratio = mass ** (2 / 3) * kinetic / nonlinear
    return RadialProfile(lo, float(r_cut), kinetic, mass, nonlinear, ratio)


def gaussian_energy_radial(width: float = 1.0, a: float = 0.5) -> dict[str, float]:
    """Energy terms of u = (pi w^2)^{-3/4} exp(-r^2/(2 w^2)) with a unit Coulomb
    center at the peak, by 1-D radial quadrature."""
    norm = (np.pi * width**2) ** (-0.75)

    def u(r):
        return norm * np.exp(-r * r / (2 * width**2))

    def du(r):
        return -r / width**2 * u(r)

    def integ(fn):
        return 4 * np.pi * quad(lambda r: fn(r) * r * r, 0.0, 40 * width,
                                limit=400, epsabs=1e-14, epsrel=1e-12)[0]

    kinetic = integ(lambda r: du(r) ** 2)
    external = -4 * np.pi * quad(lambda r: u(r) ** 2 * r, 0.0, 40 * width,
                                 limit=400, epsabs=1e-14, epsrel=1e-12)[0]
    nonlinear = integ(lambda r: u(r) ** (10 / 3))
    return {"kinetic": kinetic, "external": external, "nonlinear": nonlinear,
            "total": kinetic + external - a * nonlinear}
