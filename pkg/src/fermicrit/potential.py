"""Multi-center attractive Coulomb potential on the grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import Grid


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    grid: Grid
    centers: tuple[tuple[float, float, float], ...]
    values: np.ndarray

    @property
    def n_centers(self) -> int:
        return len(self.centers)

    def nearest_center(self, point) -> int:
        """0-based index of the Coulomb center closest to ``point``."""
        d = [np.linalg.norm(np.subtract(point, c)) for c in self.centers]
        return int(np.argmin(d))


def coulomb_values(grid: Grid, centers, r_reg: float | None = None) -> np.ndarray:
    """-sum_k 1/max(|x - y_k|, r_reg); r_reg defaults to half a cell."""
    r_reg = grid.spacing / 2 if r_reg is None else r_reg
    v = np.zeros(grid.shape)
    for c in centers:
        v -= 1.0 / np.maximum(grid.distance_to(c), r_reg)
    return v


def validate_centers(grid: Grid, centers) -> tuple[tuple[float, float, float], ...]:
    pts = tuple(tuple(float(v) for v in c) for c in centers)
    if not pts:
        raise ConfigurationError("at least one Coulomb center is required")
    for p in pts:
        if len(p) != 3 or not all(np.isfinite(p)):
            raise ConfigurationError(f"center {p} is not a finite 3-vector")
        if not grid.contains(p, margin=grid.box_length / 4):
            raise ConfigurationError(
                f"center {p} closer than box_length/4 to the boundary of the box")
    for i in range(len(pts)):
        for j in range(i):
            if np.allclose(pts[i], pts[j], rtol=0, atol=1e-12):
                raise ConfigurationError(f"duplicate Coulomb centers: {pts[i]}")
    return pts


def build_coulomb(grid: Grid, centers) -> PotentialSpec:
    pts = validate_centers(grid, centers)
    values = coulomb_values(grid, pts)
    values.setflags(write=False)
    return PotentialSpec(grid, pts, values)


def hardy_bound_check(grid: Grid, pot: PotentialSpec, f: np.ndarray, eps: float) -> float:
    """Slack in V >= -eps K (-Delta) - 4 K / eps, evaluated on ``f``.

    Nonnegative up to the discretization of the singularity.
    """
    f = grid.check(f)
    norm2 = grid.inner_product(f, f)
    if norm2 == 0:
        raise DomainError("Hardy check needs a nonzero field")
    if eps <= 0:
        raise DomainError("eps must be positive")
    k = pot.n_centers
    return float(eps * k * grid.kinetic(f) + 4.0 / eps * k * norm2
                 + grid.inner_product(pot.values * f, f))
