"""Energy functional E_a(gamma) = Tr(-Delta + V) gamma - a int rho^{5/3}."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError
from .potential import PotentialSpec
from .state import DensityMatrix, density

RHO_FLOOR = 1e-300


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    external: float
    nonlinear: float
    coupling: float

    @property
    def total(self) -> float:
        return self.kinetic + self.external - self.coupling * self.nonlinear

    def as_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def rho_power(rho: np.ndarray, p: float) -> np.ndarray:
    """rho^p with nodes below RHO_FLOOR set to zero."""
    out = np.zeros_like(rho)
    mask = rho > RHO_FLOOR
    out[mask] = rho[mask] ** p
    return out


def _check_pot(gamma: DensityMatrix, pot: PotentialSpec) -> None:
    if pot.grid.shape != gamma.grid.shape or pot.grid.box_length != gamma.grid.box_length:
        raise DimensionError("potential and density matrix live on different grids")


def energy(gamma: DensityMatrix, pot: PotentialSpec, a: float) -> EnergyBreakdown:
    _check_pot(gamma, pot)
    grid = gamma.grid
    rho = density(gamma)
    kin = float(np.dot(gamma.occupations, grid.kinetic(gamma.orbitals)))
    ext = float(grid.integrate(pot.values * rho))
    nl = float(grid.integrate(rho_power(rho, 5 / 3)))
    return EnergyBreakdown(kin, ext, nl, float(a))


def mean_field_potential(gamma: DensityMatrix, pot: PotentialSpec, a: float) -> np.ndarray:
    """V - (5a/3) rho^{2/3}: the multiplicative part of H_V."""
    _check_pot(gamma, pot)
    return pot.values - (5.0 * a / 3.0) * rho_power(density(gamma), 2 / 3)


def apply_hamiltonian(grid, veff: np.ndarray, f: np.ndarray) -> np.ndarray:
    return grid.apply_laplacian(f) + veff * f


def mean_field_apply(gamma: DensityMatrix, pot: PotentialSpec, a: float,
                     f: np.ndarray) -> np.ndarray:
    """H_V f = (-Delta + V - (5a/3) rho_gamma^{2/3}) f for frozen gamma."""
    return apply_hamiltonian(gamma.grid, mean_field_potential(gamma, pot, a), gamma.grid.check(f))


def gradient(gamma: DensityMatrix, pot: PotentialSpec, a: float) -> np.ndarray:
    """Unconstrained L^2 gradient g_i = 2 n_i H_V u_i (occupations frozen)."""
    hu = mean_field_apply(gamma, pot, a, gamma.orbitals)
    return 2.0 * gamma.occupations[:, None, None, None] * hu


def hoffmann_ostenhof_check(gamma: DensityMatrix) -> float:
    """Tr(-Delta gamma) - int |grad sqrt(rho)|^2; nonnegative in the continuum."""
    grid = gamma.grid
    kin = float(np.dot(gamma.occupations, grid.kinetic(gamma.orbitals)))
    root = np.sqrt(np.maximum(density(gamma), 0.0))
    return kin - float(grid.kinetic(root))


def lower_bound(lam: float, n_centers: int, a: float, a_star: float) -> float:
    """-8 lam K^2 a*/(a* - a), valid for a < a*."""
    return -8.0 * lam * n_centers**2 * a_star / (a_star - a)
