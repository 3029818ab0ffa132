"""Command-line entry point: ``fermicrit <command> [--config run.json]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import blowup, critical, verify
from .errors import ConfigurationError, FermicritError
from .grid import make_grid, set_threads
from .potential import build_coulomb
from .solver import SolverConfig, minimize, nonexistence_demo
from .state import density, load_density_matrix, save_density_matrix

log = logging.getLogger("fermicrit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
BOUNDARY_TOL = 1e-6

DEFAULT_CONFIG = {
    "grid": {"n_per_axis": 48, "box_length": 40.0},
    "centers": [[0.3, 0.2, 0.1]],
    "coupling": {"a": 0.0},
    "particle_number": 1.0,
    "solver": dataclasses.asdict(SolverConfig()),
    "output_dir": "fermicrit-out",
    "seed": 0,
    "threads": None,
    "critical": {"n_list": [1], "n_per_axis": 48, "box_length": 40.0, "n_seeds": 1},
    "t_sweep": [1, 2, 4, 8, 16],
}


class RunConfig:
    """Validated view of a JSON run configuration (defaults filled in)."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigurationError("configuration must be a JSON object")
        unknown = set(raw) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        for key, val in raw.items():
            if isinstance(cfg.get(key), dict) and key != "coupling":
                if not isinstance(val, dict):
                    raise ConfigurationError(f"'{key}' must be an object")
                cfg[key].update(val)
            else:
                cfg[key] = val
        self.raw = cfg
        try:
            self.grid = make_grid(int(cfg["grid"]["n_per_axis"]), float(cfg["grid"]["box_length"]))
            self.pot = build_coulomb(self.grid, cfg["centers"])
            solver = dict(cfg["solver"])
            solver["seed"] = int(cfg["seed"])
            self.solver = SolverConfig(**solver)
        except TypeError as exc:
            raise ConfigurationError(f"bad solver settings: {exc}") from exc
        self.lam = float(cfg["particle_number"])
        if not self.lam > 0:
            raise ConfigurationError("particle_number must be positive")
        if not isinstance(cfg["coupling"], dict) or not cfg["coupling"]:
            raise ConfigurationError("coupling must be an object")
        self.coupling = cfg["coupling"]
        self.seed = int(cfg["seed"])
        out = os.environ.get("FERMICRIT_OUTPUT_DIR") or cfg["output_dir"]
        self.output_dir = Path(out)
        self.threads = cfg["threads"]
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigurationError("threads must be a positive integer")
        self.critical = cfg["critical"]
        self.t_sweep = [float(t) for t in cfg["t_sweep"]]

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls({})
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls(raw)

    def critical_grid(self):
        return make_grid(int(self.critical["n_per_axis"]), float(self.critical["box_length"]))

    def out(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name


def _a_star(cfg: RunConfig, n: int) -> tuple[float, critical.CriticalEstimate | None]:
    """â*_n from the coupling block if given, else estimated on the critical grid."""
    if "a_star" in cfg.coupling:
        return float(cfg.coupling["a_star"]), None
    est = critical.estimate_a_star(n, cfg.critical_grid(), cfg.solver,
                                   n_seeds=int(cfg.critical.get("n_seeds", 1)))
    return est.a_star, est


def _coupling(cfg: RunConfig, n: int) -> float:
    c = cfg.coupling
    if "a" in c:
        a = float(c["a"])
    elif "a_fraction" in c:
        a = float(c["a_fraction"]) * _a_star(cfg, n)[0]
    else:
        raise ConfigurationError("coupling needs 'a' or 'a_fraction'")
    if a < 0:
        raise ConfigurationError("coupling a must be nonnegative")
    return a


def _warn_boundary(gamma) -> None:
    """Warn when the density on the box faces exceeds 1e-6 of its peak."""
    rho = density(gamma)
    faces = max(np.abs(rho[[0, -1]]).max(), np.abs(rho[:, [0, -1]]).max(),
                np.abs(rho[:, :, [0, -1]]).max())
    if faces > BOUNDARY_TOL * rho.max():
        log.warning("density on the box boundary is %.2e of its peak (> %g); "
                    "enlarge box_length", faces / rho.max(), BOUNDARY_TOL)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_minimize(cfg: RunConfig, args) -> int:
    n = max(1, int(np.ceil(cfg.lam)))
    a = _coupling(cfg, n)
    state = minimize(cfg.pot, a, cfg.lam, cfg.solver, trace_path=cfg.out("trace.csv"))
    save_density_matrix(state.gamma, cfg.out("ground_state.fcdm"))
    _warn_boundary(state.gamma)
    _write_json(cfg.out("energy.json"), {
        **state.breakdown.as_dict(), "total": state.total, "a": a, "lambda": cfg.lam,
        "multipliers": [float(m) for m in state.multipliers],
        "residuals": [float(r) for r in state.residuals],
        "iterations": state.iterations, "converged": state.converged, "seed": cfg.seed})
    print(f"E = {state.total:.10g}  mu = {np.array2string(state.multipliers, precision=6)}  "
          f"iterations = {state.iterations}  converged = {state.converged}")
    return EXIT_OK if state.converged else EXIT_NUMERICAL


def cmd_critical(cfg: RunConfig, args) -> int:
    n_list = args.n if args.n is not None else cfg.critical["n_list"]
    n_list = [int(n) for n in n_list]
    if not n_list or any(n < 1 for n in n_list):
        raise ConfigurationError("n list must be non-empty with entries >= 1")
    grid = cfg.critical_grid()
    cache: dict = {}
    rows, failed = [], False
    print(f"{'n':>3} {'a*_n':>14} {'L*_n':>14} {'duality_err':>12} {'rank':>5}")
    for n in sorted(set(n_list)):
        try:
            a_est = critical.estimate_a_star(n, grid, cfg.solver, cache=cache,
                                             n_seeds=int(cfg.critical.get("n_seeds", 1)))
            l_est = critical.estimate_l_star(n, grid, cfg.solver)
        except FermicritError as exc:
            log.error("n=%d failed: %s", n, exc)
            failed = True
            continue
        err = critical.duality_check(a_est, l_est)
        save_density_matrix(a_est.optimizer, cfg.out(f"a_star_optimizer_n{n}.fcdm"))
        rec = {"n": n, "a_star": a_est.a_star, "l_star": l_est.l_star, "duality_error": err,
               "rank_found": a_est.rank_found, "residual": a_est.residual,
               "tolerance": a_est.tolerance, "per_rank": {str(k): v for k, v in a_est.per_rank.items()},
               "lt_degenerate": l_est.degenerate,
               "grid_meta": {"n_per_axis": grid.n_per_axis, "box_length": grid.box_length},
               "seed": cfg.seed}
        _write_json(cfg.out(f"critical_n{n}.json"), rec)
        rows.append(rec)
        print(f"{n:>3} {a_est.a_star:>14.8f} {l_est.l_star:>14.8g} {err:>12.3e} {a_est.rank_found:>5}")
    for lo, hi in zip(rows, rows[1:]):
        sign = ">" if lo["a_star"] > hi["a_star"] else "<="
        print(f"a*_{lo['n']} - a*_{hi['n']} = {lo['a_star'] - hi['a_star']:.3e}  "
              f"(a*_{lo['n']} {sign} a*_{hi['n']})")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_blowup(cfg: RunConfig, args) -> int:
    n = int(round(cfg.lam))
    if n not in (2, 3) or n != cfg.lam:
        raise ConfigurationError("blow-up runs need particle_number 2 or 3")
    c = cfg.coupling
    if "schedule" in c:
        schedule = [float(e) for e in c["schedule"]]
        a_star = _a_star(cfg, n)[0]
    elif "eps_fractions" in c:
        a_star = _a_star(cfg, n)[0]
        schedule = [float(f) * a_star for f in c["eps_fractions"]]
    else:
        raise ConfigurationError("blow-up coupling needs 'schedule' or 'eps_fractions'")
    if len(schedule) < 1 or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError("eps schedule must be non-empty and strictly decreasing")

    def save(rec, state):
        save_density_matrix(state.gamma, cfg.out(f"state_eps{rec.eps:.6g}.fcdm"))
        print(f"eps = {rec.eps:.6g}  eps*E = {rec.scaled_energy:.8g}  "
              f"virial = {rec.identity_residuals['virial']:.3e}  "
              f"center = {rec.nearest_center_index}  converged = {rec.converged}")

    records = blowup.run_continuation(n, cfg.pot, a_star, schedule, cfg.solver,
                                      frame_box=c.get("frame_box"), on_record=save)
    blowup.write_continuation_csv(records, cfg.out("continuation.csv"))
    n_conv = sum(r.converged for r in records)
    return EXIT_OK if 2 * n_conv >= len(records) else EXIT_NUMERICAL


def cmd_nonexist(cfg: RunConfig, args) -> int:
    n = max(1, int(np.ceil(cfg.lam)))
    if args.optimizer:
        opt = load_density_matrix(args.optimizer)
        a_star = float(cfg.coupling.get("a_star", critical.critical_ratio(opt)))
    else:
        a_star, est = _a_star(cfg, n)
        if est is None:
            est = critical.estimate_a_star(n, cfg.critical_grid(), cfg.solver)
        opt = est.optimizer
    a = _coupling(cfg, n)
    if a < a_star:
        raise ConfigurationError(f"nonexistence sweep needs a >= a* ({a:.6g} < {a_star:.6g})")
    sweep = nonexistence_demo(cfg.pot, a, cfg.t_sweep, opt, a_star)
    with open(cfg.out("nonexist.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "energy", "kinetic", "external", "nonlinear", "truncated"])
        for p in sweep:
            w.writerow([repr(p.t), repr(p.total), repr(p.kinetic), repr(p.external),
                        repr(p.nonlinear), int(p.truncated)])
            print(f"t = {p.t:<6g} E = {p.total:.8g}")
    vals = [p.total for p in sweep]
    decreasing = all(b < a_ for a_, b in zip(vals, vals[1:]))
    return EXIT_OK if decreasing else EXIT_NUMERICAL


def cmd_verify(cfg: RunConfig | None, args) -> int:
    if args.level not in verify.LEVELS:
        raise ConfigurationError(f"level must be one of {verify.LEVELS}")
    n = args.n_per_axis
    reports = verify.run_suite(args.level, args.seed, n_per_axis=n, box_length=args.box_length,
                               log=lambda m: log.info(m))
    out = Path(os.environ.get("FERMICRIT_OUTPUT_DIR") or args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    verify.write_junit(reports, out / "verify.xml")
    verify.write_csv(reports, out / "verify.csv")
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<40} measured={r.measured:.4g} "
              f"bound={r.bound:.4g}  {r.context}")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
    return EXIT_NUMERICAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fermicrit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        return sp

    with_config(sub.add_parser("minimize", help="ground state at one coupling"))
    sp = with_config(sub.add_parser("critical", help="a*_n, L*_n and the duality table"))
    sp.add_argument("--n", type=int, nargs="*", help="ranks to estimate (overrides config)")
    with_config(sub.add_parser("blowup", help="continuation a -> a*_N"))
    sp = with_config(sub.add_parser("nonexist", help="energy along the dilation family for a >= a*"))
    sp.add_argument("--optimizer", help="stored a*-optimizer container")
    sp = sub.add_parser("verify", help="invariant suite")
    sp.add_argument("--level", default="fast")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-per-axis", type=int, default=None)
    sp.add_argument("--box-length", type=float, default=None)
    sp.add_argument("--output-dir", default="fermicrit-out")
    sub.add_parser("print-config", help="print the default configuration")
    return p


COMMANDS = {"minimize": cmd_minimize, "critical": cmd_critical, "blowup": cmd_blowup,
            "nonexist": cmd_nonexist}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "print-config":
            print(json.dumps(DEFAULT_CONFIG, indent=2))
            return EXIT_OK
        if args.command == "verify":
            return cmd_verify(None, args)
        cfg = RunConfig.load(args.config)
        if cfg.threads is not None:
            set_threads(int(cfg.threads))
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FermicritError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
