"""Convolution, correlation, and the differential operators behind the
regularization functionals.

Grid spacing is 1 pixel. First differences are central in the interior and
one-sided full-step at the edges; grad_xt/grad_yt are their exact transposes,
so the surface-area and total-variation operators below are exact negated
gradients of their discretized functionals (not pointwise transcriptions of
the continuum formulas, which differ at second order and would fail the
variational consistency checks).
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backend
from .image import as_kernel, as_plane

__all__ = [
    "BoundaryMode", "Regularizer", "SAF",
    "conv_same", "correlate_adjoint", "conv_full",
    "grad_x", "grad_y", "grad_xt", "grad_yt", "second_derivs",
    "metric_det", "saf_operator", "tv_operator", "delta_kernel",
]


class BoundaryMode(Enum):
    ZERO_PAD = "zero"
    REPLICATE = "replicate"


@dataclass(frozen=True)
class Regularizer:
    """Choice of smoothing functional: 'saf' (surface area) or 'tv'
    (total variation with smoothing factor beta)."""
    kind: str
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("saf", "tv"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def apply(self, plane):
        if self.kind == "saf":
            return saf_operator(plane)
        return tv_operator(plane, self.beta)


SAF = Regularizer("saf")


def conv_same(img, k, mode=BoundaryMode.REPLICATE):
    """Same-size transform x[i,j] = sum_{l,m} img[i+l-L//2, j+m-M//2] k[l,m].

    Center-anchored, correlation-style offsets. Out-of-range samples are 0
    (ZERO_PAD) or the nearest edge value (REPLICATE).
    """
    img = as_plane(img)
    k = as_kernel(k)
    if k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {img.shape}")
    return backend.conv2d_same(img, k, mode is BoundaryMode.ZERO_PAD, False)


def correlate_adjoint(img, k, mode=BoundaryMode.REPLICATE):
    """Flipped-kernel counterpart of conv_same.

    Under ZERO_PAD this is the exact adjoint:
    <conv_same(a,k), b> == <a, correlate_adjoint(b,k)>.
    """
    img = as_plane(img)
    k = as_kernel(k)
    if k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {img.shape}")
    return backend.conv2d_same(img, k, mode is BoundaryMode.ZERO_PAD, True)


def conv_full(a, b):
    """Full 2D convolution of two small grids, output (La+Lb-1, Ma+Mb-1).

    True convolution (second factor flipped); used for kernel-on-kernel
    products where the result must keep all support.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    la, ma = a.shape
    lb, mb = b.shape
    out = np.zeros((la + lb - 1, ma + mb - 1))
    for i in range(lb):
        for j in range(mb):
            v = b[i, j]
            if v != 0.0:
                out[i:i + la, j:j + ma] += v * a
    return out


def delta_kernel(l, m):
    """The identity kernel: 1 at the center of an l x m grid."""
    k = np.zeros((int(l), int(m)))
    k[l // 2, m // 2] = 1.0
    return as_kernel(k)


def grad_x(f):
    """d/dx (x = column index): central interior, one-sided at the edges."""
    f = np.asarray(f, dtype=np.float64)
    g = np.zeros_like(f)
    if f.shape[1] == 1:
        return g
    g[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / 2.0
    g[:, 0] = f[:, 1] - f[:, 0]
    g[:, -1] = f[:, -1] - f[:, -2]
    return g


def grad_y(f):
    """d/dy (y = row index): central interior, one-sided at the edges."""
    f = np.asarray(f, dtype=np.float64)
    g = np.zeros_like(f)
    if f.shape[0] == 1:
        return g
    g[1:-1, :] = (f[2:, :] - f[:-2, :]) / 2.0
    g[0, :] = f[1, :] - f[0, :]
    g[-1, :] = f[-1, :] - f[-2, :]
    return g


def grad_xt(u):
    """Exact transpose of grad_x (scatter form)."""
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros_like(u)
    if u.shape[1] == 1:
        return g
    g[:, 2:] += u[:, 1:-1] / 2.0
    g[:, :-2] -= u[:, 1:-1] / 2.0
    g[:, 1] += u[:, 0]
    g[:, 0] -= u[:, 0]
    g[:, -1] += u[:, -1]
    g[:, -2] -= u[:, -1]
    return g


def grad_yt(u):
    """Exact transpose of grad_y (scatter form)."""
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros_like(u)
    if u.shape[0] == 1:
        return g
    g[2:, :] += u[1:-1, :] / 2.0
    g[:-2, :] -= u[1:-1, :] / 2.0
    g[1, :] += u[0, :]
    g[0, :] -= u[0, :]
    g[-1, :] += u[-1, :]
    g[-2, :] -= u[-1, :]
    return g


def second_derivs(f):
    """(Ixx, Iyy, Ixy): 3-point second differences with replicated edges;
    the cross term is grad_y(grad_x(f))."""
    f = np.asarray(f, dtype=np.float64)
    p = np.pad(f, 1, mode="edge")
    ixx = p[1:-1, 2:] - 2.0 * f + p[1:-1, :-2]
    iyy = p[2:, 1:-1] - 2.0 * f + p[:-2, 1:-1]
    ixy = grad_y(grad_x(f))
    return ixx, iyy, ixy


def metric_det(f):
    """Determinant of the surface metric tensor: 1 + fx^2 + fy^2 (>= 1)."""
    gx = grad_x(f)
    gy = grad_y(f)
    return 1.0 + gx * gx + gy * gy


def saf_operator(f):
    """Surface-area smoothing operator: the descent direction of the
    discretized area functional sum sqrt(1 + fx^2 + fy^2).

    Equals div(grad f / sqrt(1+|grad f|^2)) in the continuum (the
    mean-curvature numerator identity); discretely it is built as
    -(Dx^T (fx/w) + Dy^T (fy/w)) so that <saf_operator(f), d> is exactly
    minus the directional derivative of the functional along d.
    """
    gx = grad_x(f)
    gy = grad_y(f)
    w = np.sqrt(1.0 + gx * gx + gy * gy)
    return -(grad_xt(gx / w) + grad_yt(gy / w))


def tv_operator(f, beta):
    """Total-variation operator: descent direction of the discretized
    functional sum sqrt(fx^2 + fy^2 + beta).

    beta > 0 smooths the gradient-zero singularity; at beta = 0, points with
    zero gradient contribute 0 (removable singularity of the flat case).
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    gx = grad_x(f)
    gy = grad_y(f)
    w = np.sqrt(gx * gx + gy * gy + beta)
    wx = np.divide(gx, w, out=np.zeros_like(gx), where=w > 0)
    wy = np.divide(gy, w, out=np.zeros_like(gy), where=w > 0)
    return -(grad_xt(wx) + grad_yt(wy))
