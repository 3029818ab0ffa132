"""Cross-module invariant suite with JUnit/CSV reporting.

Two tiers: ``fast`` runs the grid/potential/state/energy property checks in
well under a minute; ``full`` adds the oracle comparisons, the duality check
and a short continuation.
"""
from __future__ import annotations

import csv
import math
import tempfile
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .blowup import run_continuation
from .critical import critical_ratio, duality_check, estimate_a_star, estimate_l_star
from .energy import energy, gradient, hoffmann_ostenhof_check
from .errors import ConfigurationError, FermicritError
from .grid import Grid, dilate, make_grid
from .potential import build_coulomb, hardy_bound_check
from .solver import SolverConfig, minimize
from .state import (DensityMatrix, load_density_matrix, lowdin, save_density_matrix)

LEVELS = ("fast", "full")
HYDROGEN_CENTER = (0.3, 0.2, 0.1)


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    measured: float
    bound: float
    context: str = ""

    @classmethod
    def upper(cls, name: str, measured: float, bound: float, context: str = "") -> "CheckReport":
        """Pass iff ``measured`` is finite and <= ``bound``."""
        measured = float(measured)
        ok = bool(math.isfinite(measured) and measured <= bound)
        return cls(name, ok, measured, float(bound), context)


def smooth_random_field(grid: Grid, rng: np.random.Generator, count: int,
                        width: float | None = None) -> np.ndarray:
    """Low-pass filtered noise times a centered Gaussian envelope."""
    width = grid.box_length / 8 if width is None else width
    noise = rng.standard_normal((count,) + grid.shape)
    f = grid.apply_fourier_multiplier(noise, np.exp(-grid.laplacian_multipliers * width**2 / 4))
    env = np.exp(-grid.distance_to(grid.center) ** 2 / (2 * width**2))
    return f * env


def random_state(grid: Grid, rng: np.random.Generator, rank: int,
                 fractional: bool = True) -> DensityMatrix:
    u = lowdin(grid, smooth_random_field(grid, rng, rank))
    occ = rng.uniform(0.1, 1.0, rank) if fractional else np.ones(rank)
    return DensityMatrix(grid, u, occ)


# ---------------------------------------------------------------- fast tier

def _grid_checks(rng) -> list[CheckReport]:
    g = make_grid(32, 20.0)
    x, y, z = g.coords()
    k = 2 * np.pi / g.box_length * np.array([2, -1, 3])
    f = np.cos(k[0] * x + k[1] * y + k[2] * z) + 0 * (x + y + z)
    lap = g.apply_laplacian(f)
    err_lap = float(np.max(np.abs(lap - np.dot(k, k) * f)))
    u = smooth_random_field(g, rng, 1)[0]
    kin = g.kinetic(u)
    err_parseval = abs(kin - g.inner_product(g.apply_laplacian(u), u)) / kin
    r2 = g.distance_to(g.center) ** 2
    gauss = np.exp(-r2 / 12.5)
    n0 = g.norm(gauss)
    dil = max(abs(g.norm(dilate(g, gauss, t)) / n0 - 1) for t in (0.75, 1.5))
    # round trip against the worse of the two single dilations (exact reference)
    single = max(g.norm(dilate(g, gauss, t) - t**1.5 * np.exp(-r2 * t * t / 12.5)) / n0
                 for t in (1.5, 1 / 1.5))
    trip = g.norm(dilate(g, dilate(g, gauss, 1.5), 1 / 1.5) - gauss) / n0
    return [
        CheckReport.upper("grid.laplacian_plane_wave", err_lap, 1e-9, "max |(-Delta - |k|^2) e_k|"),
        CheckReport.upper("grid.kinetic_parseval", err_parseval, 1e-10, "relative"),
        CheckReport.upper("grid.dilation_norm", dil, 0.01, "t in {0.75, 1.5}"),
        CheckReport.upper("grid.dilation_round_trip", trip, 4 * single, "t = 1.5 then 1/1.5"),
    ]


def _potential_checks(rng) -> list[CheckReport]:
    g = make_grid(32, 20.0)
    pot = build_coulomb(g, [(0.3, 0.2, 0.1), (-2.1, 1.3, 0.4)])
    worst = np.inf
    for f in smooth_random_field(g, rng, 5, width=2.0):
        for eps in (0.25, 1.0, 4.0):
            worst = min(worst, hardy_bound_check(g, pot, f, eps) / g.inner_product(f, f))
    try:
        build_coulomb(g, [(0.0, 0.0, 0.0), (0.0, 0.0, 0.0)])
        dup = 1.0
    except ConfigurationError:
        dup = 0.0
    return [
        CheckReport.upper("potential.hardy_bound", -worst, 0.0, "slack / ||f||^2 >= 0"),
        CheckReport.upper("potential.duplicate_rejected", dup, 0.0, "1 = accepted duplicate"),
    ]


def _state_checks(rng) -> list[CheckReport]:
    g = make_grid(24, 16.0)
    u = smooth_random_field(g, rng, 4)
    q = lowdin(g, u)
    ortho = float(np.max(np.abs(g.gram(q) - np.eye(4))))
    idem = float(np.max(np.abs(lowdin(g, q) - q)))
    # span: the orthonormalized family is reproduced by projecting onto span(u)
    a = u.reshape(4, -1)
    b = q.reshape(4, -1)
    coef = np.linalg.solve(a @ a.T, a @ b.T)
    span = float(np.max(np.abs(b - coef.T @ a)) / np.max(np.abs(b)))
    gamma = DensityMatrix(g, q, np.array([1.0, 1.0, 0.5, 0.25]))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "state.fcdm"
        save_density_matrix(gamma, path)
        back = load_density_matrix(path)
    roundtrip = float(np.max(np.abs(back.orbitals - gamma.orbitals))
                      + np.max(np.abs(back.occupations - gamma.occupations)))
    return [
        CheckReport.upper("state.lowdin_orthonormal", ortho, 1e-10, "||G - I||_max"),
        CheckReport.upper("state.lowdin_idempotent", idem, 1e-10, "max |L(L(U)) - L(U)|"),
        CheckReport.upper("state.lowdin_span", span, 1e-8, "projector difference"),
        CheckReport.upper("state.container_roundtrip", roundtrip, 0.0, "bitwise"),
    ]


def _fd_gradient_error(gamma: DensityMatrix, pot, a: float, rng) -> float:
    g = gamma.grid
    grad = gradient(gamma, pot, a)
    d = smooth_random_field(g, rng, gamma.rank)
    d /= math.sqrt(sum(g.inner_product(di, di) for di in d))
    h = 1e-4
    ep = energy(gamma.replace(orbitals=gamma.orbitals + h * d), pot, a).total
    em = energy(gamma.replace(orbitals=gamma.orbitals - h * d), pot, a).total
    fd = (ep - em) / (2 * h)
    an = sum(g.inner_product(gi, di) for gi, di in zip(grad, d))
    return abs(fd - an) / max(abs(an), 1e-12)


def _energy_checks(rng, n_states: int = 20, n_fd: int = 5) -> list[CheckReport]:
    g = make_grid(24, 16.0)
    pot = build_coulomb(g, [(0.3, 0.2, 0.1)])
    worst_ho = -np.inf
    for _ in range(n_states):
        gamma = random_state(g, rng, int(rng.integers(1, 4)))
        tr = float(gamma.occupations @ g.kinetic(gamma.orbitals))
        worst_ho = max(worst_ho, -hoffmann_ostenhof_check(gamma) / tr)
    worst_fd = max(_fd_gradient_error(random_state(g, rng, 2), pot, 3.0, rng)
                   for _ in range(n_fd))
    gamma = random_state(g, rng, 3, fractional=False)
    rot, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rotated = gamma.replace(orbitals=np.tensordot(rot, gamma.orbitals, axes=(1, 0)))
    r0 = critical_ratio(gamma)
    rot_err = abs(critical_ratio(rotated) - r0) / r0
    return [
        CheckReport.upper("energy.hoffmann_ostenhof", worst_ho, 1e-6,
                          f"-(slack)/Tr(-Delta gamma) over {n_states} random states"),
        CheckReport.upper("energy.gradient_fd", worst_fd, 1e-5,
                          f"central differences, {n_fd} random states"),
        CheckReport.upper("critical.ratio_rotation_invariance", rot_err, 1e-10, "relative"),
    ]


# ---------------------------------------------------------------- full tier

def _hydrogen_check(n: int, box: float, cfg: SolverConfig) -> list[CheckReport]:
    g = make_grid(n, box)
    pot = build_coulomb(g, [HYDROGEN_CENTER])
    exact = oracles.radial_coulomb_levels(0, 1.0, 1)[0]
    try:
        st = minimize(pot, 0.0, 1.0, cfg)
        err = abs(st.multipliers[0] - exact) / abs(exact)
    except FermicritError:
        err = math.inf
    return [CheckReport.upper("solver.hydrogen_mu1_oracle", err, 0.05,
                              f"{n}^3, box {box:g}; oracle {exact:.6f}")]


def _critical_checks(n: int, box: float, cfg: SolverConfig) -> tuple[list[CheckReport], dict]:
    g = make_grid(n, box)
    oracle = oracles.critical_ratio_radial().ratio
    out: list[CheckReport] = []
    info: dict = {}
    try:
        a1 = estimate_a_star(1, g, cfg)
        l1 = estimate_l_star(1, g, cfg)
        info["a1"] = a1
        out.append(CheckReport.upper("critical.a1_oracle", abs(a1.a_star - oracle) / oracle, 0.02,
                                     f"oracle {oracle:.6f}"))
        out.append(CheckReport.upper("critical.duality_n1", duality_check(a1, l1), 0.05,
                                     f"a*={a1.a_star:.6f}, L*={l1.l_star:.6g}"))
        out.append(CheckReport.upper("critical.q_system_residual", a1.residual, 1e-4,
                                     "relative to ||Q||_{H^1}"))
    except FermicritError as exc:
        for name in ("critical.a1_oracle", "critical.duality_n1", "critical.q_system_residual"):
            out.append(CheckReport(name, False, math.inf, 0.0, f"failed: {exc}"))
    return out, info


def _continuation_check(cfg: SolverConfig, a_star2: float) -> list[CheckReport]:
    g = make_grid(64, 14.0)
    pot = build_coulomb(g, [(-1.03, 0.07, 0.05), (1.52, -0.04, 0.06)])
    try:
        recs = run_continuation(2, pot, a_star2, [f * a_star2 for f in (0.3, 0.2, 0.1)], cfg,
                                refine=False)
    except FermicritError as exc:
        return [CheckReport("blowup.envelope", False, math.inf, 10.0, f"failed: {exc}")]
    kin = np.array([r.eps**2 * r.kinetic for r in recs])
    neg = min(-r.scaled_energy for r in recs)
    return [
        CheckReport.upper("blowup.envelope", float(np.max(kin) / np.median(kin)), 10.0,
                          "max eps^2 Tr(-Delta) / median"),
        CheckReport.upper("blowup.scaled_energy_negative", -neg, 0.0, "-eps E > 0"),
    ]


def run_suite(level: str = "fast", seed: int = 0, n_per_axis: int | None = None,
              box_length: float | None = None, log=None) -> list[CheckReport]:
    """Run the invariant suite; failures are reports, never exceptions.

    ``n_per_axis``/``box_length`` override the grid of the full-tier oracle
    checks (defaults 48 and 40).
    """
    if level not in LEVELS:
        raise ConfigurationError(f"level must be one of {LEVELS}, got {level!r}")
    rng = np.random.default_rng(seed)
    reports: list[CheckReport] = []
    steps = [_grid_checks, _potential_checks, _state_checks, _energy_checks]
    for step in steps:
        t0 = time.perf_counter()
        reports += step(rng)
        if log:
            log(f"{step.__name__.strip('_')}: {time.perf_counter() - t0:.1f}s")
    if level == "full":
        n = 48 if n_per_axis is None else int(n_per_axis)
        box = 40.0 if box_length is None else float(box_length)
        cfg = SolverConfig(seed=seed)
        reports += _hydrogen_check(n, box, SolverConfig(seed=seed, grad_tol=1e-6))
        crit, info = _critical_checks(n, box, cfg)
        reports += crit
        if "a1" in info:
            try:
                a2 = estimate_a_star(2, make_grid(n, box), cfg).a_star
                reports += _continuation_check(cfg, a2)
            except FermicritError as exc:
                reports.append(CheckReport("blowup.envelope", False, math.inf, 10.0,
                                           f"failed: {exc}"))
    return reports


def write_junit(reports: list[CheckReport], path, suite: str = "fermicrit.verify") -> None:
    root = ET.Element("testsuite", name=suite, tests=str(len(reports)),
                      failures=str(sum(not r.passed for r in reports)))
    for r in reports:
        case = ET.SubElement(root, "testcase", classname=suite, name=r.name)
        if not r.passed:
            fail = ET.SubElement(case, "failure", message=f"measured {r.measured!r} > bound {r.bound!r}")
            fail.text = r.context
        ET.SubElement(case, "system-out").text = \
            f"measured={r.measured!r} bound={r.bound!r} {r.context}"
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)


def write_csv(reports: list[CheckReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "passed", "measured", "bound", "context"])
        for r in reports:
            w.writerow([r.name, int(r.passed), repr(r.measured), repr(r.bound), r.context])
