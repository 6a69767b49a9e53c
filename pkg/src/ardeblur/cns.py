"""PSF extraction from a fitted stencil's null space.

A blurred image's stencil factors (approximately) through the blur: placing
the stencil at every shift inside an L x M frame builds a block operator
whose left near-null vector, reshaped to L x M, is the blur kernel up to
scale. The smallest eigenpair of the small symmetric product matrix gives
that vector; the eigenvalue spectrum doubles as a confidence signal (a deep
null only exists when the image really is blurred).
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .image import as_kernel
from .ops import delta_kernel

__all__ = [
    "BlockArOperator", "NullSpaceDiagnostics", "AmbiguityError",
    "build_block_operator", "cns_estimate", "estimate_psf", "psf_shape_report",
]

# eigenvalue gap below this fraction of the largest eigenvalue means the
# null direction is not unique (double-precision identifiability floor)
GAP_TOL = 1e-10


class AmbiguityError(ValueError):
    """The two smallest eigenvalues tie: no unique null direction.

    Carries both candidate kernels (sum-normalized when possible) so callers
    can inspect or fall back.
    """

    def __init__(self, candidates, eigenvalues):
        super().__init__(
            "smallest eigenvalue is not simple (gap below tolerance); "
            "the blur kernel is not identifiable from this stencil")
        self.candidates = candidates
        self.eigenvalues = eigenvalues


@dataclass
class BlockArOperator:
    """Stencil placed at every (l, m) shift of an L x M frame.

    matrix has L*M rows and (P+L-1)*(Q+M-1) columns; row (l, m) holds
    coefficient a[i, k] at column (l+i, m+k) in lexicographic indexing.
    """
    p: int
    q: int
    l: int
    m: int
    matrix: np.ndarray


@dataclass
class NullSpaceDiagnostics:
    eig_min: float
    eig_second: float
    eig_max: float

    @property
    def null_depth(self):
        """eig_min / eig_max; near zero only when a deep null exists."""
        if self.eig_max <= 0.0:
            return 1.0
        return self.eig_min / self.eig_max

    @property
    def gap(self):
        return self.eig_second - self.eig_min


def build_block_operator(model, l, m):
    """Assemble the block operator of a stencil at kernel frame l x m."""
    p, q = model.p, model.q
    l, m = int(l), int(m)
    if not (l < p and m < q):
        raise ValueError(f"kernel frame {l}x{m} must be smaller than stencil {p}x{q}")
    if l * m < 2:
        raise ValueError("kernel frame must have at least 2 cells")
    rows = l * m
    cols_r, cols_c = p + l - 1, q + m - 1
    mat = np.zeros((rows, cols_r * cols_c))
    grid = np.zeros((cols_r, cols_c))
    for li in range(l):
        for mi in range(m):
            grid[:] = 0.0
            grid[li:li + p, mi:mi + q] = model.coeffs
            mat[li * m + mi] = grid.ravel()
    return BlockArOperator(p=p, q=q, l=l, m=m, matrix=mat)


def cns_estimate(op):
    """Kernel from the smallest eigenpair of op.matrix @ op.matrix.T.

    Returns (kernel, NullSpaceDiagnostics). The eigenvector sign is chosen
    so the kernel sums positive, then the kernel is scaled to unit sum.
    Raises AmbiguityError when the smallest eigenvalue is not simple within
    GAP_TOL * eig_max.
    """
    a = op.matrix
    gram = a @ a.T
    evals, evecs = scipy.linalg.eigh(gram)
    evals = np.maximum(evals, 0.0)  # clip eigh's tiny negative noise
    eig_min, eig_second, eig_max = evals[0], evals[1], evals[-1]
    diag = NullSpaceDiagnostics(eig_min=float(eig_min),
                                eig_second=float(eig_second),
                                eig_max=float(eig_max))
    if eig_second - eig_min <= GAP_TOL * eig_max:
        cands = []
        for i in (0, 1):
            v = evecs[:, i].reshape(op.l, op.m)
            s = v.sum()
            cands.append(v / s if abs(s) > 1e-12 else v)
        raise AmbiguityError(cands, diag)
    v = evecs[:, 0]
    if v.sum() < 0.0:
        v = -v
    s = v.sum()
    if abs(s) < 1e-12:
        raise ValueError("null vector has zero sum; cannot normalize to a kernel")
    kern = (v / s).reshape(op.l, op.m)
    return as_kernel(kern), diag


def estimate_psf(model, l, m, no_blur_eig_ratio=None):
    """Blind kernel estimate with the no-blur guard.

    Builds the block operator and runs cns_estimate. When no_blur_eig_ratio
    is given, a shallow null (null_depth >= ratio) or an eigenvalue tie
    resolves to the identity kernel with no_blur=True: the image carries no
    usable blur signature. An ill-conditioned stencil fit is not guarded
    here; its pseudo-inverse solution often still carries the kernel (a
    constant patch routes to the tie branch through its center-only
    stencil).

    Returns (kernel, diagnostics_or_None, no_blur: bool).
    """
    op = build_block_operator(model, l, m)
    try:
        kern, diag = cns_estimate(op)
    except AmbiguityError as err:
        if no_blur_eig_ratio is None:
            raise
        return delta_kernel(l, m), err.eigenvalues, True
    if no_blur_eig_ratio is not None and diag.null_depth >= no_blur_eig_ratio:
        return delta_kernel(l, m), diag, True
    return kern, diag, False


def psf_shape_report(h):
    """Moment diagnostics of a normalized kernel.

    Returns a dict with center-of-mass offset, second-moment anisotropy
    (major/minor variance ratio; nan for a point mass), and the fraction of
    absolute mass on the boundary ring.
    """
    h = as_kernel(h)
    l, m = h.shape
    total = h.sum()
    if abs(total) < 1e-300:
        raise ValueError("kernel mass is zero")
    rows = np.arange(l)[:, None]
    cols = np.arange(m)[None, :]
    r_cm = float((rows * h).sum() / total)
    c_cm = float((cols * h).sum() / total)
    mu_rr = float(((rows - r_cm) ** 2 * h).sum() / total)
    mu_cc = float(((cols - c_cm) ** 2 * h).sum() / total)
    mu_rc = float(((rows - r_cm) * (cols - c_cm) * h).sum() / total)
    tr = mu_rr + mu_cc
    det = mu_rr * mu_cc - mu_rc * mu_rc
    disc = max(tr * tr / 4.0 - det, 0.0)
    lam_hi = tr / 2.0 + math.sqrt(disc)
    lam_lo = tr / 2.0 - math.sqrt(disc)
    if lam_hi <= 0.0:
        aniso = math.nan  # point mass: 0/0
    elif lam_lo <= 0.0:
        aniso = math.inf
    else:
        aniso = lam_hi / lam_lo
    mass = np.abs(h)
    if l > 2 and m > 2:
        boundary = mass.sum() - mass[1:-1, 1:-1].sum()
    else:
        boundary = mass.sum()
    return {
        "center_offset": (r_cm - l // 2, c_cm - m // 2),
        "anisotropy": aniso,
        "boundary_mass_fraction": float(boundary / mass.sum()) if mass.sum() > 0 else 0.0,
    }
