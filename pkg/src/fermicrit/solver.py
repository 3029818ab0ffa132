"""Constrained minimization of E_a and self-consistent refinement."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .eigen import lowest_eigenpairs
from .energy import EnergyBreakdown, apply_hamiltonian, energy, rho_power
from .errors import ConfigurationError, DimensionError
from .grid import Grid
from .potential import PotentialSpec, coulomb_values
from .state import DensityMatrix, density, lowdin, occupation_layout
from .stiefel import fourier_preconditioner, stiefel_minimize


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 3000
    grad_tol: float = 1e-5
    step_init: float = 1.0
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    seed: int = 0
    scf_mix: float = 0.5
    scf_iters: int = 30
    eig_tol: float = 1e-7
    rank_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1 or self.scf_iters < 1:
            raise ConfigurationError("iteration limits must be positive")
        if not (self.grad_tol > 0 and self.step_init > 0 and self.eig_tol > 0):
            raise ConfigurationError("tolerances and step_init must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ConfigurationError("armijo_c and armijo_shrink must lie in (0, 1)")
        if not 0 < self.scf_mix <= 1:
            raise ConfigurationError("scf_mix must lie in (0, 1]")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")


@dataclass
class GroundState:
    gamma: DensityMatrix
    breakdown: EnergyBreakdown
    multipliers: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    spectrum: np.ndarray | None = None  # lowest R+2 eigenvalues of H_V, when computed

    @property
    def total(self) -> float:
        return self.breakdown.total

    def aufbau_ok(self, tol: float = 1e-4) -> bool | None:
        """Multipliers coincide with the lowest eigenvalues of H_V."""
        if self.spectrum is None:
            return None
        r = len(self.multipliers)
        return bool(np.all(np.abs(self.spectrum[:r] - self.multipliers) < tol * (1 + np.abs(self.multipliers))))


_POLYS = [
    lambda x, y, z: np.ones_like(x + y + z),
    lambda x, y, z: x + 0 * (y + z),
    lambda x, y, z: y + 0 * (x + z),
    lambda x, y, z: z + 0 * (x + y),
    lambda x, y, z: x * y + 0 * z,
    lambda x, y, z: y * z + 0 * x,
    lambda x, y, z: x * z + 0 * y,
    lambda x, y, z: x * x - y * y + 0 * z,
]


def initial_orbitals(grid: Grid, centers, rank: int, seed: int = 0) -> np.ndarray:
    """Gaussians of width L/8 at the centers (cycled) times low-order polynomials."""
    if rank > len(_POLYS):
        raise ConfigurationError(f"at most {len(_POLYS)} orbitals supported, got {rank}")
    x, y, z = grid.coords()
    sigma = grid.box_length / 8
    rng = np.random.default_rng(seed)
    out = np.empty((rank,) + grid.shape)
    for i in range(rank):
        c = centers[i % len(centers)]
        dx, dy, dz = x - c[0], y - c[1], z - c[2]
        gauss = np.exp(-(dx**2 + dy**2 + dz**2) / (2 * sigma**2))
        poly = _POLYS[i](dx / sigma, dy / sigma, dz / sigma)
        out[i] = poly * gauss
    # seeded smooth perturbation breaks exact symmetries of the start
    noise = rng.standard_normal(out.shape)
    noise = grid.apply_fourier_multiplier(noise, np.exp(-grid.laplacian_multipliers * sigma**2))
    noise *= 1e-2 / max(np.abs(noise).max(), 1e-300)
    return lowdin(grid, out + noise * np.abs(out).max())


def _energy_objective(grid: Grid, pot: PotentialSpec, a: float, occ: np.ndarray):
    k2 = grid.laplacian_multipliers
    w = np.full(k2.shape[-1], 2.0)
    w[0] = 1.0
    w[-1] = 1.0

    kw = k2 * w * (grid.cell_volume / grid.size)

    def objective(u, need_grad):
        # one orbital at a time: bounds the FFT temporaries on fine grids
        rho = np.einsum("i,i...->...", occ, u * u)
        r23 = rho_power(rho, 2 / 3)
        val = float(grid.integrate(pot.values * rho) - a * grid.integrate(r23 * rho))
        veff = pot.values - (5 * a / 3) * r23 if need_grad else None
        del rho, r23
        grad = np.empty_like(u) if need_grad else None
        for i in range(u.shape[0]):
            uh = grid.fft(u[i])
            val += float(occ[i] * np.vdot(uh.real**2 + uh.imag**2, kw))
            if need_grad:
                uh *= k2
                gi = grid.ifft(uh)
                del uh
                gi += veff * u[i]
                gi *= 2.0 * occ[i]
                grad[i] = gi
        return val, grad
    return objective


def finalize_state(gamma: DensityMatrix, pot: PotentialSpec, a: float) -> tuple:
    """Rotate orbitals to diagonalize <u_i, H_V u_j> within equal-occupation
    groups and return (gamma, multipliers, residuals), sorted by multiplier."""
    grid = gamma.grid
    u = gamma.orbitals.copy()
    occ = gamma.occupations
    veff = pot.values - (5 * a / 3) * rho_power(density(gamma), 2 / 3)
    hu = apply_hamiltonian(grid, veff, u)
    r = gamma.rank
    hmat = (u.reshape(r, -1) @ hu.reshape(r, -1).T) * grid.cell_volume
    hmat = 0.5 * (hmat + hmat.T)
    mu = np.empty(r)
    for val in np.unique(occ):
        idx = np.flatnonzero(np.isclose(occ, val, rtol=0, atol=1e-12))
        w, v = np.linalg.eigh(hmat[np.ix_(idx, idx)])
        u[idx] = np.tensordot(v.T, gamma.orbitals[idx], axes=(1, 0))
        hu[idx] = np.tensordot(v.T, hu[idx], axes=(1, 0))
        mu[idx] = w
    order = np.argsort(mu, kind="stable")
    u, hu, mu, occ = u[order], hu[order], mu[order], occ[order]
    for i in range(r):
        flat = u[i].reshape(-1)
        if flat[np.argmax(np.abs(flat))] < 0:
            u[i] *= -1
            hu[i] *= -1
    res = np.atleast_1d(grid.norm(hu - mu[:, None, None, None] * u))
    return DensityMatrix(grid, u, occ), mu, res


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "tangent_grad_norm", "step"])
        for t in trace:
            w.writerow([t.iteration, repr(t.value), repr(t.grad_norm), repr(t.step)])


def minimize(pot: PotentialSpec, a: float, lam: float, cfg: SolverConfig | None = None,
             warm_start: DensityMatrix | None = None, trace_path=None) -> GroundState:
    """Minimize E_a over gamma with the fixed occupation layout for ``lam``."""
    cfg = cfg or SolverConfig()
    if a < 0:
        raise ConfigurationError("coupling a must be nonnegative")
    grid = pot.grid
    occ = occupation_layout(lam)
    r = len(occ)
    if warm_start is not None:
        if warm_start.grid.shape != grid.shape or warm_start.grid.box_length != grid.box_length:
            raise DimensionError("warm start lives on a different grid")
        u0 = warm_start.orbitals[:r]
        if u0.shape[0] < r:
            extra = initial_orbitals(grid, pot.centers, r, cfg.seed)[u0.shape[0]:]
            u0 = np.concatenate([u0, extra])
    else:
        u0 = initial_orbitals(grid, pot.centers, r, cfg.seed)
    objective = _energy_objective(grid, pot, a, occ)

    def shift_for(u):
        kin = grid.kinetic(u)
        return max(float(np.mean(kin)), 0.05)

    res = stiefel_minimize(
        grid, u0, objective, max_iters=cfg.max_iters, grad_tol=cfg.grad_tol,
        step_init=cfg.step_init, armijo_c=cfg.armijo_c, armijo_shrink=cfg.armijo_shrink,
        precond=fourier_preconditioner(grid, shift_for(lowdin(grid, u0)), 0.5))
    gamma, mu, resid = finalize_state(DensityMatrix(grid, res.orbitals, occ), pot, a)
    state = GroundState(gamma, energy(gamma, pot, a), mu, resid, res.iterations,
                        res.converged, res.trace)
    if trace_path is not None:
        write_trace_csv(res.trace, trace_path)
    return state


def scf_refine(state: GroundState, pot: PotentialSpec, a: float,
               cfg: SolverConfig | None = None) -> GroundState:
    """Fixed-point refinement: diagonalize the frozen H_V, keep the lowest R
    eigenvectors, mix densities, repeat.

    The returned state never has a larger worst residual than the input; it
    always carries the lowest R+2 eigenvalues of H_V at the returned density.
    """
    cfg = cfg or SolverConfig()
    grid = pot.grid
    gamma = state.gamma
    r = gamma.rank
    occ = np.sort(gamma.occupations)[::-1]  # aufbau: fractional orbital on top
    rho_mix = density(gamma)
    orbitals = gamma.orbitals
    eig = None
    ok = True
    for _ in range(cfg.scf_iters):
        veff = pot.values - (5 * a / 3) * rho_power(rho_mix, 2 / 3)
        eig = lowest_eigenpairs(grid, veff, r, guess=orbitals, probes=2, tol=cfg.eig_tol,
                                seed=cfg.seed)
        if not eig.converged:
            ok = False
            break
        orbitals = eig.vectors
        rho_new = np.einsum("i,i...->...", occ, orbitals**2)
        change = grid.integrate(np.abs(rho_new - rho_mix))
        rho_mix = (1 - cfg.scf_mix) * rho_mix + cfg.scf_mix * rho_new
        if change < cfg.grad_tol:
            break
    cand = DensityMatrix(grid, orbitals, occ)
    cand, mu, resid = finalize_state(cand, pot, a)
    veff = pot.values - (5 * a / 3) * rho_power(density(cand), 2 / 3)
    spec = lowest_eigenpairs(grid, veff, r + 2, guess=cand.orbitals, probes=1,
                             tol=cfg.eig_tol, seed=cfg.seed)
    if ok and np.max(resid) < np.max(state.residuals):
        out = GroundState(cand, energy(cand, pot, a), mu, resid, state.iterations,
                          bool(np.all(resid < 10 * cfg.grad_tol)), state.trace, spec.values)
    else:
        out = GroundState(state.gamma, state.breakdown, state.multipliers, state.residuals,
                          state.iterations, state.converged and ok, state.trace)
        veff = pot.values - (5 * a / 3) * rho_power(density(state.gamma), 2 / 3)
        out.spectrum = lowest_eigenpairs(grid, veff, r + 2, guess=state.gamma.orbitals,
                                         probes=1, tol=cfg.eig_tol, seed=cfg.seed).values
    return out


@dataclass(frozen=True)
class SweepPoint:
    t: float
    total: float
    kinetic: float
    external: float
    nonlinear: float
    truncated: bool


def virial_scale(optimizer: DensityMatrix) -> float:
    """Dilation making int |x - c|^{-1} rho = 2 int rho^{5/3} about the box center c."""
    grid = optimizer.grid
    rho = density(optimizer)
    c = grid.integrate(-coulomb_values(grid, [grid.center]) * rho)
    d = grid.integrate(rho_power(rho, 5 / 3))
    return float(c / (2 * d))


def scaled_family_energy(optimizer: DensityMatrix, pot: PotentialSpec, a: float,
                         s: float, anchor) -> SweepPoint:
    """E_a of s^{3/2} Q(s (x - anchor)) evaluated on the co-scaled grid.

    The orbital arrays are reused verbatim on a grid of edge L/s centered at
    ``anchor``, so no interpolation enters and kinetic/nonlinear terms scale
    exactly like s^2.
    """
    g0 = optimizer.grid
    gs = Grid(g0.n_per_axis, g0.box_length / s, tuple(anchor))
    u = optimizer.orbitals * s**1.5
    occ = optimizer.occupations
    rho = np.einsum("i,i...->...", occ, u * u)
    kin = float(occ @ gs.kinetic(u))
    ext = float(gs.integrate(coulomb_values(gs, pot.centers) * rho))
    nl = float(gs.integrate(rho_power(rho, 5 / 3)))
    total = kin + ext - a * nl
    # a box larger than the physical one means the family no longer fits
    return SweepPoint(s, total, kin, ext, nl, bool(gs.box_length > pot.grid.box_length))


def nonexistence_demo(pot: PotentialSpec, a: float, t_sweep, optimizer: DensityMatrix,
                      a_star: float) -> list[SweepPoint]:
    """Energy along gamma_t = sum t^3 |Q_i(t(. - y_1))><Q_i(t(. - y_1))| for a >= a*.

    ``t = 1`` is the optimizer in its virial gauge (int |x|^{-1} rho = 2 int rho^{5/3}),
    the profile selected by the Coulomb singularity in the blow-up limit.
    """
    if a < a_star:
        raise ConfigurationError(f"nonexistence demo needs a >= a* ({a} < {a_star})")
    ts = [float(t) for t in t_sweep]
    if len(ts) < 2:
        raise ConfigurationError("t sweep needs at least two points")
    if any(t <= 0 for t in ts) or any(b <= a_ for a_, b in zip(ts, ts[1:])):
        raise ConfigurationError("t sweep must be positive and increasing")
    s0 = virial_scale(optimizer)
    out = []
    for t in ts:
        p = scaled_family_energy(optimizer, pot, a, s0 * t, pot.centers[0])
        out.append(SweepPoint(t, p.total, p.kinetic, p.external, p.nonlinear, p.truncated))
    return out
