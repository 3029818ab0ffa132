"""Continuation a -> a*_N: blow-up rescaling, identities, tails and rank diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import rho_power
from .errors import ConfigurationError, DiagnosticError, DomainError, ResolutionError
from .grid import Grid, resample
from .potential import PotentialSpec, coulomb_values
from .solver import GroundState, SolverConfig, minimize, scf_refine
from .state import DensityMatrix, density, rank_diagnostic

MIN_CORE_SPACINGS = 4.0


@dataclass
class BlowupRecord:
    a: float
    eps: float
    energy_total: float
    scaled_energy: float
    kinetic: float
    external: float
    nonlinear: float
    rescaled: DensityMatrix | None      # None when the continuation drops frames
    concentration_center: tuple          # raw argmax of rho on the u-grid
    nearest_center_index: int            # 1-based Coulomb center closest to the argmax
    identity_residuals: dict
    rank_found: int
    tail_rates: list
    converged: bool
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gram_error: float = float("nan")     # ||G - I||_max of the w-frame
    nonlinear_w: float = float("nan")    # int rho_w^{5/3}

    @property
    def energy_law_gap(self) -> float:
        """|scaled_energy + int rho_w^{5/3}| / int rho_w^{5/3}."""
        return abs(self.scaled_energy + self.nonlinear_w) / self.nonlinear_w


@dataclass
class RankClassification:
    rank_found: int
    case: str                   # "full-rank", "case-1", "case-2", "inconclusive"
    norms: np.ndarray
    detail: dict = field(default_factory=dict)


def core_width(grid: Grid, rho: np.ndarray) -> float:
    """Diameter of the ball with the volume of {rho > max(rho)/2}."""
    vol = np.count_nonzero(rho > 0.5 * rho.max()) * grid.cell_volume
    return 2.0 * (3.0 * vol / (4.0 * math.pi)) ** (1.0 / 3.0)


def density_argmax(grid: Grid, rho: np.ndarray) -> tuple:
    i = np.unravel_index(int(np.argmax(rho)), rho.shape)
    ax = grid.axis
    return tuple(float(ax[k] + c) for k, c in zip(i, grid.center))


def w_frame(grid: Grid, box_length: float) -> Grid:
    """Fresh grid for the rescaled orbitals: same resolution count, centered at 0."""
    return Grid(grid.n_per_axis, float(box_length), (0.0, 0.0, 0.0))


def rescale_minimizer(state: GroundState, a_star: float, a: float, center,
                      frame: Grid | None = None) -> DensityMatrix:
    """w_i(x) = eps^{3/2} u_i(eps x + center), eps = a_star - a, sampled on ``frame``.

    Cubic-spline resampling; orbitals are kept as sampled (no
    re-orthonormalization) so that mass leaving the frame shows up in the
    Gram matrix.
    """
    if not a < a_star:
        raise ConfigurationError("rescaling needs a < a_star")
    g = state.gamma.grid
    if not g.contains(center):
        raise ConfigurationError("rescaling center outside the box")
    eps = a_star - a
    rho = density(state.gamma)
    cw = core_width(g, rho)
    if cw < MIN_CORE_SPACINGS * g.spacing:
        raise ResolutionError(
            f"core width {cw:.3g} is under {MIN_CORE_SPACINGS:g} spacings "
            f"({g.spacing:.3g}); refine the u-grid")
    if frame is None:
        frame = w_frame(g, 4.0 * cw / eps)
    w = resample(state.gamma.orbitals, g, frame, scale=eps, origin=tuple(center),
                 target=frame.center, order=3)
    return DensityMatrix(frame, w, state.gamma.occupations)


def verify_identities(rescaled: DensityMatrix, a_star: float, center=None) -> dict:
    """Residuals of (1/a*) Tr(-Delta gamma) = int rho^{5/3} = 1/2 int |x|^{-1} rho.

    |x| is measured from ``center`` (default: the frame center, where the
    concentration point lands after rescaling).
    """
    grid = rescaled.grid
    rho = density(rescaled)
    d = float(grid.integrate(rho_power(rho, 5 / 3)))
    if not d > 0:
        raise DomainError("zero density: identities undefined")
    c = grid.center if center is None else tuple(center)
    coul = float(grid.integrate(-coulomb_values(grid, [c]) * rho))
    kin = float(rescaled.occupations @ grid.kinetic(rescaled.orbitals))
    return {"virial": abs(coul - 2.0 * d) / d,
            "energy_law": abs(kin / a_star - d) / d}


def _shell_average(grid: Grid, f: np.ndarray, r: np.ndarray, edges: np.ndarray):
    idx = np.digitize(r.ravel(), edges) - 1
    ok = (idx >= 0) & (idx < len(edges) - 1)
    sums = np.bincount(idx[ok], weights=np.abs(f).ravel()[ok], minlength=len(edges) - 1)
    cnt = np.bincount(idx[ok], minlength=len(edges) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / cnt, cnt


def fit_tail_rates(state: GroundState, boundary_tol: float = 1e-6,
                   amplitude_floor: float = 1e-5) -> list:
    """Exponential decay rate of each orbital from shell averages of |u_i|.

    Radii are measured from the density argmax. Each orbital is fitted by
    least squares of log(shell average) against r on
    [r_peak + 2 sigma, min(r_face - 2h, r_floor)], where r_peak is the radius
    of the largest shell average, sigma the orbital's rms radius, r_face the
    distance to the nearest box face and r_floor the first radius beyond the
    peak where the shell average drops below ``amplitude_floor`` times its
    maximum (below that the profile is solver noise, not the tail).
    """
    gamma = state.gamma
    grid = gamma.grid
    rho = density(gamma)
    peak = rho.max()
    face_mask = np.zeros(grid.shape, dtype=bool)
    face_mask[[0, -1], :, :] = True
    face_mask[:, [0, -1], :] = True
    face_mask[:, :, [0, -1]] = True
    if rho[face_mask].max() > boundary_tol * peak:
        raise DiagnosticError("density at the box boundary is not negligible; enlarge the box")
    c = density_argmax(grid, rho)
    r = grid.distance_to(c)
    h = grid.spacing
    r_face = min(grid.box_length / 2 - abs(ci - gi) for ci, gi in zip(c, grid.center))
    edges = np.arange(0.0, r_face + h, h)
    mids = 0.5 * (edges[1:] + edges[:-1])
    rates = []
    for u in gamma.orbitals:
        avg, cnt = _shell_average(grid, u, r, edges)
        sigma = math.sqrt(float(grid.integrate(r * r * u * u)) / float(grid.integrate(u * u)))
        valid = cnt > 0
        top = np.argmax(np.where(valid, avg, -np.inf))
        r_peak = mids[top]
        below = np.flatnonzero(valid[top:] & (avg[top:] < amplitude_floor * avg[top]))
        r_floor = mids[top + below[0]] if below.size else np.inf
        lo, hi = r_peak + 2.0 * sigma, min(r_face - 2.0 * h, r_floor)
        sel = valid & (mids >= lo) & (mids <= hi) & (avg > 0)
        if np.count_nonzero(sel) < 3:
            raise DiagnosticError(
                f"tail window [{lo:.3g}, {hi:.3g}] is empty; enlarge the box")
        slope = np.polyfit(mids[sel], np.log(avg[sel]), 1)[0]
        rates.append(float(-slope))
    return rates


def classify_rank_degeneracy(rescaled: DensityMatrix, tol: float = 0.05) -> RankClassification:
    """Rank of a rescaled N = 3 triple and which degenerate form it takes.

    Case 1: w3 = +-sqrt(||w2||^{-2} - 1) w2 with ||w1|| = 1 and w1 orthogonal
    to w2, w3. Case 2: w3 = 0 with (w1, w2) orthonormal.
    """
    grid = rescaled.grid
    w = rescaled.orbitals
    if w.shape[0] != 3:
        raise ConfigurationError("classification needs three orbitals")
    g = grid.gram(w)
    norms = np.sqrt(np.clip(np.diag(g), 0.0, None))
    rank = rank_diagnostic(grid, w, tol)
    if rank >= 3:
        return RankClassification(rank, "full-rank", norms)
    detail = {}
    if norms[2] < tol and abs(norms[0] - 1) < tol and abs(norms[1] - 1) < tol \
            and abs(g[0, 1]) < tol:
        return RankClassification(rank, "case-2", norms, {"w3_norm": float(norms[2])})
    if norms[1] > 0 and norms[1] <= 1.0:
        cmag = math.sqrt(max(norms[1] ** -2 - 1.0, 0.0))
        best = np.inf
        for sgn in (1.0, -1.0):
            diff = grid.norm(w[2] - sgn * cmag * w[1]) / max(norms[2], 1e-300)
            best = min(best, float(diff))
        detail = {"c": cmag, "mismatch": best}
        if best < tol and abs(norms[0] - 1) < tol and abs(g[0, 1]) < tol \
                and abs(g[0, 2]) < tol:
            return RankClassification(rank, "case-1", norms, detail)
    return RankClassification(rank, "inconclusive", norms, detail)


def test_function_bound(optimizer: DensityMatrix) -> float:
    """-(1/4) (int rho_Q^{5/3})^{-1} (int |x|^{-1} rho_Q)^2 for the stored a*-optimizer,
    |x| measured from its own (recentered) frame center."""
    grid = optimizer.grid
    rho = density(optimizer)
    d = float(grid.integrate(rho_power(rho, 5 / 3)))
    c = float(grid.integrate(-coulomb_values(grid, [grid.center]) * rho))
    return -0.25 * c * c / d


def run_continuation(n: int, pot: PotentialSpec, a_star: float, eps_schedule,
                     cfg: SolverConfig | None = None, frame_box: float | None = None,
                     warm_start: DensityMatrix | None = None, rank_tol: float = 0.1,
                     refine: bool = True, on_record=None,
                     keep_rescaled: bool = True) -> list[BlowupRecord]:
    """Minimize at a = a_star - eps along a decreasing schedule with warm starts.

    Every record carries the scaled energy eps*E, the concentration point,
    the rescaled frame, identity residuals, Gram rank and tails. The rescaled
    frame is one fixed grid for all eps; by default it is the u-box seen at
    the smallest scheduled eps (edge box_u / eps_min), which holds everything
    the u-grid holds at the deepest point and matches its resolution there.
    With ``keep_rescaled=False`` the records keep only scalar diagnostics
    (``rescaled`` is None after ``on_record`` has seen it), which bounds memory
    on fine grids.
    """
    if n not in (2, 3):
        raise ConfigurationError("continuation is defined for n in {2, 3}")
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule or any(e <= 0 for e in eps_schedule):
        raise ConfigurationError("eps schedule must be positive")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ConfigurationError("eps schedule must be strictly decreasing")
    cfg = cfg or SolverConfig()
    records = []
    prev = warm_start
    frame = w_frame(pot.grid, frame_box if frame_box is not None
                    else pot.grid.box_length / eps_schedule[-1])
    for eps in eps_schedule:
        a = a_star - eps
        if a < 0:
            raise ConfigurationError(f"eps={eps} exceeds a_star")
        state = minimize(pot, a, float(n), cfg, warm_start=prev)
        if refine:
            state = scf_refine(state, pot, a, cfg)
        prev = state.gamma
        rho = density(state.gamma)
        c_raw = density_argmax(pot.grid, rho)
        k = pot.nearest_center(c_raw)
        wstate = rescale_minimizer(state, a_star, a, pot.centers[k], frame)
        resid = verify_identities(wstate, a_star)
        try:
            tails = fit_tail_rates(state)
        except DiagnosticError:
            tails = [float("nan")] * state.gamma.rank
        g = frame.gram(wstate.orbitals)
        nl_w = float(frame.integrate(rho_power(density(wstate), 5 / 3)))
        br = state.breakdown
        records.append(BlowupRecord(
            a=a, eps=eps, energy_total=br.total, scaled_energy=eps * br.total,
            kinetic=br.kinetic, external=br.external, nonlinear=br.nonlinear,
            rescaled=wstate, concentration_center=c_raw, nearest_center_index=k + 1,
            identity_residuals=resid, rank_found=rank_diagnostic(frame, wstate.orbitals, rank_tol),
            tail_rates=tails, converged=bool(state.converged), multipliers=state.multipliers,
            gram_error=float(np.max(np.abs(g - np.eye(len(g))))), nonlinear_w=nl_w))
        if on_record is not None:
            on_record(records[-1], state)
        if not keep_rescaled:
            records[-1].rescaled = None
        del state, wstate, rho
    return records


CSV_COLUMNS = ["a", "eps", "energy_total", "scaled_energy", "kinetic", "external",
               "nonlinear", "center_x", "center_y", "center_z", "nearest_center_index",
               "virial_residual", "energy_law_residual", "rank_found"]


def write_continuation_csv(records: list[BlowupRecord], path) -> None:
    """Plot-ready table: one row per continuation record."""
    n_tail = max((len(r.tail_rates) for r in records), default=0)
    cols = CSV_COLUMNS + [f"tail_rate_{i + 1}" for i in range(n_tail)] + ["converged"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for r in records:
            tails = list(r.tail_rates) + [float("nan")] * (n_tail - len(r.tail_rates))
            wr.writerow([repr(r.a), repr(r.eps), repr(r.energy_total), repr(r.scaled_energy),
                         repr(r.kinetic), repr(r.external), repr(r.nonlinear),
                         *[repr(x) for x in r.concentration_center], r.nearest_center_index,
                         repr(r.identity_residuals["virial"]),
                         repr(r.identity_residuals["energy_law"]), r.rank_found,
                         *[repr(t) for t in tails], int(r.converged)])
