"""Shared pieces of the regularized least-squares solvers that operate on
small kernel grids (inverse-kernel estimation and the optional smoothed
stencil fit)."""
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import ops


@lru_cache(maxsize=16)
def diff_matrices(l, m):
    """Dense matrices of grad_x and grad_y acting on vectorized l x m grids."""
    n = l * m
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    e = np.zeros((l, m))
    for i in range(n):
        e.flat[i] = 1.0
        dx[:, i] = ops.grad_x(e).ravel()
        dy[:, i] = ops.grad_y(e).ravel()
        e.flat[i] = 0.0
    return dx, dy


def delta_r(g):
    """Linearized surface-area operator at g, as an (l*m, l*m) matrix.

    Frozen-weight form -(Dx^T diag(1/w) Dx + Dy^T diag(1/w) Dy) with
    w = sqrt(1 + gx^2 + gy^2), so delta_r(g) @ vec(g) equals
    vec(saf_operator(g)) exactly and the matrix is symmetric negative
    semidefinite (a regularized normal matrix R - lambda*delta_r stays
    solvable for lambda >= 0).
    """
    g = np.asarray(g, dtype=np.float64)
    l, m = g.shape
    dx, dy = diff_matrices(l, m)
    gx = ops.grad_x(g).ravel()
    gy = ops.grad_y(g).ravel()
    iw = 1.0 / np.sqrt(1.0 + gx * gx + gy * gy)
    return -(dx.T @ (dx * iw[:, None]) + dy.T @ (dy * iw[:, None]))


def sym_solve(mat, rhs):
    """Symmetric-indefinite solve with a pseudo-inverse fallback.

    Returns None when even the fallback produces non-finite values.
    """
    try:
        out = scipy.linalg.solve(mat, rhs, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError):
        out = None
    if out is None or not np.all(np.isfinite(out)):
        out = np.linalg.pinv(mat, rcond=1e-10) @ rhs
        if not np.all(np.isfinite(out)):
            return None
    return out
