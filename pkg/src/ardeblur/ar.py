"""Fit a 2D autoregressive stencil to an image plane.

The model says every pixel is (minus) a weighted sum of its P x Q
neighborhood with the central weight pinned to 1; the residual over all
window positions is minimized in the least-squares sense. The coefficient
grid of a blurred image carries the blur's signature, which the null-space
estimator (cns module) extracts.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _rls, backend, ops
from .image import as_plane, load_kernel, mean_sq, save_kernel

__all__ = ["ArModel", "ArRegConfig", "select_patch", "build_extended", "estimate_ar"]

# condition number of the normal matrix beyond which the solve falls back
# to a pseudo-inverse and the fit is flagged degenerate
_COND_LIMIT = 1e12


@dataclass
class ArModel:
    """A fitted stencil: coeffs is P x Q with coeffs[P//2, Q//2] == 1."""
    p: int
    q: int
    coeffs: np.ndarray
    degenerate: bool = False
    patch_clipped: bool = False
    reg_fallback: bool = False

    @property
    def center_index(self):
        return (self.p // 2, self.q // 2)

    def save(self, path):
        save_kernel(self.coeffs, path)

    @classmethod
    def load(cls, path):
        k = load_kernel(path)
        return cls(p=k.shape[0], q=k.shape[1], coeffs=k)


@dataclass
class ArRegConfig:
    """Optional smoothing of the stencil fit (for noised inputs): iterate the
    regularized normal equations with the surface-area operator at a fixed
    lambda, keeping the step only while the first q differences contract."""
    lam: float = 0.001
    q: int = 3
    theta: float = 2.0
    eps: float = 1e-8
    max_iters: int = 10


def select_patch(img, p, q):
    """Centered square sub-plane for stencil fitting.

    Side max(2*p*q, 4*max(p,q)), clipped to the image; an image smaller than
    p x q is a hard error (no fit possible), an image smaller than the target
    side is used whole (caller may flag it via patch_was_clipped).
    """
    img = as_plane(img)
    h, w = img.shape
    if h < p or w < q:
        raise ValueError(f"image {h}x{w} smaller than stencil {p}x{q}")
    side = max(2 * p * q, 4 * max(p, q))
    sh, sw = min(side, h), min(side, w)
    r0 = (h - sh) // 2
    c0 = (w - sw) // 2
    return img[r0:r0 + sh, c0:c0 + sw]


def patch_was_clipped(img, p, q):
    """True when the image cannot supply the full recommended patch side."""
    h, w = np.asarray(img).shape
    side = max(2 * p * q, 4 * max(p, q))
    return h < side or w < side


def build_extended(img, p, q):
    """Extended data matrix: one row per window position, columns the
    vectorized p x q window. Shape ((H-p+1)*(W-q+1), p*q).

    Materializes the full matrix; meant for inspection and small inputs.
    estimate_ar forms the same normal equations without building it.
    """
    img = as_plane(img)
    h, w = img.shape
    if p > h or q > w:
        raise ValueError(f"order {p}x{q} exceeds image {h}x{w}")
    from numpy.lib.stride_tricks import sliding_window_view
    return sliding_window_view(img, (p, q)).reshape(-1, p * q).copy()


def estimate_ar(img, p, q, reg=None):
    """Least-squares stencil fit with pinned center.

    Moves the central column of the (implicit) extended data matrix to the
    right-hand side and solves the normal equations for the remaining
    p*q - 1 coefficients. reg (ArRegConfig) enables the smoothed fit; it
    falls back to the plain solution when its early steps do not contract.

    Returns an ArModel; degenerate is set for constant patches and
    ill-conditioned normal systems (pseudo-inverse used).
    """
    img = as_plane(img)
    p, q = int(p), int(q)
    if p % 2 == 0 or q % 2 == 0:
        raise ValueError(f"orders must be odd, got {p}x{q}")
    h, w = img.shape
    if p > h or q > w:
        raise ValueError(f"order {p}x{q} exceeds image {h}x{w}")
    n_rows = (h - p + 1) * (w - q + 1)
    if n_rows < p * q:
        raise ValueError(f"underdetermined fit: {n_rows} windows for {p * q} coefficients")

    if np.ptp(img) == 0.0:
        # constant plane: any zero-sum stencil annihilates it; return the
        # trivial stencil and let the caller treat the fit as uninformative
        coeffs = np.zeros((p, q))
        coeffs[p // 2, q // 2] = 1.0
        return ArModel(p=p, q=q, coeffs=coeffs, degenerate=True)

    cr, cc = p // 2, q // 2
    gram = backend.windowed_gram(img, p, q, cr, h - cr, cc, w - cc)
    c = cr * q + cc
    free = np.arange(p * q) != c
    gff = gram[np.ix_(free, free)]
    gfc = gram[free, c]

    degenerate = False
    cond = np.linalg.cond(gff)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        a_free = np.linalg.pinv(gff, rcond=1e-10) @ (-gfc)
        degenerate = True
    else:
        a_free = _rls.sym_solve(gff, -gfc)
        if a_free is None:
            a_free = np.linalg.pinv(gff, rcond=1e-10) @ (-gfc)
            degenerate = True

    reg_fallback = False
    if reg is not None and not degenerate:
        reg_free = _regularized_fit(gram, free, c, a_free, p, q, reg)
        if reg_free is None:
            reg_fallback = True
        else:
            a_free = reg_free

    coeffs = np.empty(p * q)
    coeffs[free] = a_free
    coeffs[c] = 1.0
    return ArModel(p=p, q=q, coeffs=coeffs.reshape(p, q),
                   degenerate=degenerate, reg_fallback=reg_fallback)


def _regularized_fit(gram, free, c, a0_free, p, q, cfg):
    """Iterate (G - lam*dR) a = 0 on the pinned grid from the plain solution.

    The early-window contraction check mirrors the inverse-kernel solver:
    each of the first cfg.q differences must shrink by factor cfg.theta.
    Returns the free coefficients, or None when the window check fails or a
    solve breaks down (caller keeps the plain fit).
    """
    gff = gram[np.ix_(free, free)]
    gfc = gram[free, c]
    a = a0_free
    prev_d = mean_sq(_full_grid(a, free, c, p, q))
    for k in range(cfg.max_iters):
        grid = _full_grid(a, free, c, p, q)
        dr = _rls.delta_r(grid)
        mat = gff - cfg.lam * dr[np.ix_(free, free)]
        rhs = -gfc + cfg.lam * dr[free, c]
        a_next = _rls.sym_solve(mat, rhs)
        if a_next is None:
            return None
        d = mean_sq(_full_grid(a_next - a, free, c, p, q, zero_center=True))
        if k < cfg.q and d * cfg.theta > prev_d:
            return None
        a = a_next
        if d < cfg.eps:
            break
        prev_d = d
    return a


def _full_grid(a_free, free, c, p, q, zero_center=False):
    grid = np.empty(p * q)
    grid[free] = a_free
    grid[c] = 0.0 if zero_center else 1.0
    return grid.reshape(p, q)


def model_residual_msq(model, img):
    """Mean squared residual of the stencil over all window positions."""
    img = as_plane(img)
    res = ops.conv_same(img, model.coeffs, ops.BoundaryMode.ZERO_PAD)
    cr, cc = model.p // 2, model.q // 2
    h, w = img.shape
    interior = res[cr:h - cr, cc:w - cc]
    return mean_sq(interior)
