"""Lowest eigenpairs of -Delta + v on the grid via preconditioned LOBPCG."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .grid import Grid


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # (k, n, n, n), L^2-normalized on the grid
    residuals: np.ndarray  # ||H psi - lambda psi||_{L^2}
    converged: bool


def lowest_eigenpairs(grid: Grid, veff: np.ndarray, k: int, guess: np.ndarray | None = None,
                      probes: int = 2, tol: float = 1e-7, maxiter: int = 400,
                      seed: int = 0, shift: float | None = None) -> EigenResult:
    """Lowest ``k`` eigenpairs of -Delta + veff.

    The block carries ``k + probes`` vectors so that an eigenvalue sitting just
    above the wanted window does not get skipped. ``tol`` is on the L^2 residual.
    """
    m = k + probes
    shape = grid.shape
    size = grid.size
    scale = np.sqrt(grid.cell_volume)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((m, size)) * 1e-3
    if guess is not None:
        g = np.asarray(guess, dtype=float).reshape(-1, size)[:m]
        x0[: g.shape[0]] += g * scale
    # smooth the random part so the initial block is not dominated by grid noise
    x0 = grid.apply_fourier_multiplier(x0.reshape((m,) + shape),
                                       np.exp(-grid.laplacian_multipliers)).reshape(m, size)
    if guess is not None:
        x0[: g.shape[0]] = g * scale + 1e-6 * x0[: g.shape[0]]

    if shift is None:
        # preconditioner works best when the shift matches |lambda_1|
        shift = 1.0
        if guess is not None:
            gg = np.asarray(guess, dtype=float).reshape((-1,) + shape)
            rq = (grid.kinetic(gg) + grid.inner_product(veff * gg, gg)) / grid.inner_product(gg, gg)
            shift = float(np.clip(-np.min(rq), 0.05, 1e4))
    mult = 1.0 / (grid.laplacian_multipliers + shift)

    def matmat(x):
        x = np.asarray(x).T.reshape((-1,) + shape)
        hx = grid.apply_laplacian(x) + veff * x
        return hx.reshape(x.shape[0], size).T

    def precond(x):
        x = np.asarray(x).T.reshape((-1,) + shape)
        return grid.apply_fourier_multiplier(x, mult).reshape(x.shape[0], size).T

    a_op = LinearOperator((size, size), matvec=lambda v: matmat(v[:, None])[:, 0],
                          matmat=matmat, dtype=float)
    m_op = LinearOperator((size, size), matvec=lambda v: precond(v[:, None])[:, 0],
                          matmat=precond, dtype=float)
    # lobpcg's tol is on the Euclidean residual of unit Euclidean vectors, which
    # matches the L^2 residual of L^2-normalized fields
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, vecs = lobpcg(a_op, x0.T.copy(), M=m_op, tol=tol, maxiter=maxiter,
                            largest=False)
    order = np.argsort(vals)
    vals = vals[order][:k]
    vecs = vecs[:, order][:, :k].T / scale
    fields = vecs.reshape((k,) + shape)
    # fix the sign convention: largest-magnitude entry positive
    for i in range(k):
        flat = fields[i].reshape(-1)
        if flat[np.argmax(np.abs(flat))] < 0:
            fields[i] *= -1
    hf = grid.apply_laplacian(fields) + veff * fields
    res = grid.norm(hf - vals[:, None, None, None] * fields)
    return EigenResult(vals, fields, np.atleast_1d(res), bool(np.all(res < 10 * tol)))
