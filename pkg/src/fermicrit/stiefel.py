"""Preconditioned nonlinear CG on the manifold of orthonormal orbital frames.

Used both for the energy minimization and for the critical-ratio search. The
tangent projection uses the symmetrized multiplier matrix and the retraction is
Loewdin orthonormalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid
from .state import lowdin

# objective(U, need_grad) -> (value, euclidean gradient or None)
Objective = Callable[[np.ndarray, bool], tuple]


@dataclass
class TraceRecord:
    iteration: int
    value: float
    grad_norm: float
    step: float


@dataclass
class StiefelResult:
    orbitals: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    stalled: bool = False


def tangent_project(grid: Grid, u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """g_i - sum_j 1/2 (<g_i,u_j> + <g_j,u_i>) u_j."""
    r = u.shape[0]
    m = (g.reshape(r, -1) @ u.reshape(r, -1).T) * grid.cell_volume
    s = 0.5 * (m + m.T)
    return g - np.tensordot(s, u, axes=(1, 0))


def frame_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b) * grid.cell_volume)


def stiefel_minimize(grid: Grid, u0: np.ndarray, objective: Objective, *,
                     max_iters: int, grad_tol: float, step_init: float = 1.0,
                     armijo_c: float = 1e-4, armijo_shrink: float = 0.5,
                     precond: Callable[[np.ndarray], np.ndarray] | None = None,
                     post_step: Callable[[np.ndarray], np.ndarray | None] | None = None,
                     keep_trace: bool = True) -> StiefelResult:
    u = lowdin(grid, u0)
    f, g = objective(u, True)
    trace = []
    d = p_prev = gt_prev = None
    step = step_init
    gnorm = np.inf
    it = 0
    stalled = False
    for it in range(max_iters + 1):
        gt = tangent_project(grid, u, g)
        gnorm = np.sqrt(frame_inner(grid, gt, gt))
        if keep_trace:
            trace.append(TraceRecord(it, float(f), float(gnorm), float(step)))
        if gnorm < grad_tol or it == max_iters:
            break
        p = gt if precond is None else tangent_project(grid, u, precond(gt))
        if d is None:
            d = -p
        else:
            beta = frame_inner(grid, gt, p - p_prev) / max(frame_inner(grid, gt_prev, p_prev), 1e-300)
            d = -p + max(beta, 0.0) * tangent_project(grid, u, d)
        slope = frame_inner(grid, gt, d)
        if slope >= 0:
            d = -p
            slope = frame_inner(grid, gt, d)
        # Armijo backtracking
        s = min(2.0 * step, 1e3 * step_init) if it else step_init
        while True:
            un = lowdin(grid, u + s * d)
            fn, _ = objective(un, False)
            if np.isfinite(fn) and fn <= f + armijo_c * s * slope:
                break
            s *= armijo_shrink
            if s < 1e-14 * step_init:
                stalled = True
                break
        if stalled:
            break
        step = s
        assert fn <= f, "energy increased across an accepted step"
        u = un
        if post_step is not None:
            moved = post_step(u)
            if moved is not None:
                u = moved
                d = None
        f, g = objective(u, True)
        p_prev, gt_prev = p, gt
    return StiefelResult(u, float(f), float(gnorm), it, bool(gnorm < grad_tol), trace, stalled)


def fourier_preconditioner(grid: Grid, shift: float, scale: float = 0.5):
    mult = scale / (grid.laplacian_multipliers + shift)

    def apply(x):
        return grid.apply_fourier_multiplier(x, mult)
    return apply
