"""Inverse-kernel (deconvolution filter) estimation on the blur support.

The observed image x is re-degraded to y = h * x; the inverse kernel g is
then the least-squares filter mapping y back to x. Regularization smooths g
by iterating the normal equations with a linearized surface-area term; the
regularization weight is the largest grid value whose first few iteration
differences still contract, and a failed search falls back to the plain
least-squares solution.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _rls, backend
from .image import as_kernel, as_plane, mean_sq
from .ops import BoundaryMode, conv_same

__all__ = [
    "IpsfProblem", "IpsfConfig", "IpsfSolveReport",
    "build_problem", "solve_ls", "delta_r", "optimize_ipsf",
]

delta_r = _rls.delta_r


@dataclass
class IpsfProblem:
    """Normal equations for the inverse kernel on the h support."""
    y: np.ndarray
    x: np.ndarray
    l: int
    m: int
    r_yy: np.ndarray
    r_yx: np.ndarray


@dataclass
class IpsfConfig:
    """Search and stop parameters for optimize_ipsf.

    lam_grid is scanned in the given (descending) order; the first value
    whose initial q differences contract by factor theta is kept.
    """
    lam_grid: tuple = tuple(np.geomspace(1e-2, 1e-4, 9))
    q: int = 3
    theta: float = 2.0
    eps: float = 1e-8
    max_iters: int = 30


@dataclass
class IpsfSolveReport:
    g: np.ndarray
    lambda_used: float
    iterations: int
    residual_trace: list = field(default_factory=list)
    fallback_ls: bool = False


def build_problem(x, h):
    """Assemble the inverse-kernel normal equations.

    y = h * x (replicate boundary); the Gram sums run over interior window
    centers only, with margin (l-1, m-1) so every sample of y inside a
    window was itself computed from interior x. The inverse kernel shares
    h's support, so its dims are h's dims.
    """
    x = as_plane(x)
    h = as_kernel(h)
    l, m = h.shape
    y = conv_same(x, h, BoundaryMode.REPLICATE)
    mr, mc = l - 1, m - 1
    hh, ww = x.shape
    if hh - 2 * mr < 1 or ww - 2 * mc < 1:
        raise ValueError(f"image {hh}x{ww} too small for {l}x{m} windows with margin")
    r_yy = backend.windowed_gram(y, l, m, mr, hh - mr, mc, ww - mc)
    r_yx = backend.windowed_cross(y, x, l, m, mr, hh - mr, mc, ww - mc)
    return IpsfProblem(y=y, x=x, l=l, m=m, r_yy=r_yy, r_yx=r_yx)


def solve_ls(problem, rcond=1e-10):
    """Minimum-norm least-squares inverse kernel (singular values below
    rcond of the largest are dropped)."""
    g = np.linalg.pinv(problem.r_yy, rcond=rcond) @ problem.r_yx
    return g.reshape(problem.l, problem.m)


def optimize_ipsf(problem, cfg=None):
    """Regularized iteration with contraction-gated weight search.

    For each lambda on cfg.lam_grid (descending): start from the plain
    solution g0 (with the zero kernel as the step before it), iterate
    g <- (R_yy - lambda * delta_r(g))^{-1} r_yx, and require each of the
    first cfg.q mean-square differences to contract: d_k * theta <= d_{k-1}.
    The first lambda passing the gate runs on until d < eps or max_iters.
    No passing lambda: the plain solution is returned with fallback_ls set
    and lambda_used = 0.
    """
    if cfg is None:
        cfg = IpsfConfig()
    g_ls = solve_ls(problem)
    for lam in cfg.lam_grid:
        out = _try_lambda(problem, float(lam), g_ls, cfg)
        if out is not None:
            g, trace = out
            return IpsfSolveReport(g=g, lambda_used=float(lam),
                                   iterations=len(trace), residual_trace=trace)
    return IpsfSolveReport(g=g_ls, lambda_used=0.0, iterations=0,
                           residual_trace=[], fallback_ls=True)


def _try_lambda(problem, lam, g_ls, cfg):
    g = g_ls
    prev_d = mean_sq(g)  # difference from the zero kernel before g0
    trace = []
    for k in range(cfg.max_iters):
        mat = problem.r_yy - lam * _rls.delta_r(g)
        vec = _rls.sym_solve(mat, problem.r_yx)
        if vec is None:
            return None  # singular for this lambda
        g_next = vec.reshape(problem.l, problem.m)
        d = mean_sq(g_next - g)
        if not np.isfinite(d):
            return None
        trace.append(d)
        if k < cfg.q and d * cfg.theta > prev_d:
            return None  # early window does not contract at this lambda
        g = g_next
        if d < cfg.eps:
            break
        prev_d = d
    return g, trace
