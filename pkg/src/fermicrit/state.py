"""Finite-rank density matrices gamma = sum_i n_i |u_i><u_i|."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError, RankDeficiencyError
from .grid import Grid

ORTHO_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    grid: Grid
    orbitals: np.ndarray  # (R, n, n, n)
    occupations: np.ndarray  # (R,)

    def __post_init__(self):
        u = np.array(self.orbitals, dtype=float)
        if u.ndim == 3:
            u = u[None]
        self.grid.check(u)
        occ = np.array(self.occupations, dtype=float).reshape(-1)
        if occ.shape[0] != u.shape[0]:
            raise DimensionError(f"{u.shape[0]} orbitals but {occ.shape[0]} occupations")
        if np.any(occ < 0) or np.any(occ > 1):
            raise ConfigurationError("occupations must lie in [0, 1]")
        if not np.all(np.isfinite(u)):
            raise ConfigurationError("orbitals contain non-finite values")
        u.setflags(write=False)
        occ.setflags(write=False)
        object.__setattr__(self, "orbitals", u)
        object.__setattr__(self, "occupations", occ)

    @property
    def rank(self) -> int:
        return self.orbitals.shape[0]

    @property
    def trace(self) -> float:
        return float(self.occupations.sum())

    def gram(self) -> np.ndarray:
        return self.grid.gram(self.orbitals)

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.rank))))

    def replace(self, orbitals=None, occupations=None) -> "DensityMatrix":
        return DensityMatrix(self.grid,
                             self.orbitals if orbitals is None else orbitals,
                             self.occupations if occupations is None else occupations)


def occupation_layout(lam: float) -> np.ndarray:
    """n_1 = ... = n_{N'-1} = 1, n_{N'} = lam - N' + 1 with N' = ceil(lam)."""
    if not lam > 0:
        raise ConfigurationError(f"particle number must be positive, got {lam}")
    n_prime = math.ceil(lam - 1e-12)
    occ = np.ones(n_prime)
    occ[-1] = lam - n_prime + 1
    return occ


def density(gamma: DensityMatrix) -> np.ndarray:
    """rho(x) = sum_i n_i u_i(x)^2."""
    return np.einsum("i,i...->...", gamma.occupations, gamma.orbitals**2)


def lowdin(grid: Grid, orbitals: np.ndarray, min_eig: float = 1e-12) -> np.ndarray:
    """Symmetric orthonormalization U -> G^{-1/2} U."""
    u = grid.check(orbitals)
    g = grid.gram(u)
    w, v = np.linalg.eigh(g)
    if w[0] <= min_eig * max(w[-1], 1.0):
        raise RankDeficiencyError(w[0])
    s = (v / np.sqrt(w)) @ v.T
    return np.tensordot(s, u, axes=(1, 0))


def orthonormalize(gamma: DensityMatrix) -> DensityMatrix:
    return gamma.replace(orbitals=lowdin(gamma.grid, gamma.orbitals))


def operator_norm(gamma: DensityMatrix, tol: float = ORTHO_TOL) -> float:
    if gamma.orthonormality_error() > tol:
        raise ContractError("operator_norm requires orthonormal orbitals")
    return float(np.max(gamma.occupations))


def rank_diagnostic(grid: Grid, orbitals: np.ndarray, tol: float = 1e-6) -> int:
    """Numerical dimension of span{u_i}: Gram eigenvalues above tol * largest."""
    u = grid.check(orbitals)
    if u.ndim == 3:
        u = u[None]
    if u.shape[0] == 0:
        raise DimensionError("empty orbital list")
    w = np.linalg.eigvalsh(grid.gram(u))
    if w[-1] <= 0:
        return 0
    return int(np.sum(w > tol * w[-1]))


# Binary container: little-endian header then float64 payload.
_MAGIC = b"FCDM"
_VERSION = 1
_HEADER = struct.Struct("<4sIId3dI")


def save_density_matrix(gamma: DensityMatrix, path) -> None:
    path = Path(path)
    g = gamma.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, g.n_per_axis, g.box_length,
                              *g.center, gamma.rank))
        fh.write(np.asarray(gamma.occupations, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(gamma.orbitals, dtype="<f8").tobytes())


def load_density_matrix(path) -> DensityMatrix:
    data = Path(path).read_bytes()
    magic, version, n, box, cx, cy, cz, rank = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ConfigurationError(f"{path}: not a density-matrix container")
    off = _HEADER.size
    occ = np.frombuffer(data, dtype="<f8", count=rank, offset=off)
    off += 8 * rank
    orb = np.frombuffer(data, dtype="<f8", count=rank * n**3, offset=off)
    grid = Grid(n, box, (cx, cy, cz))
    return DensityMatrix(grid, orb.reshape(rank, n, n, n).astype(float), occ.astype(float))
