"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled core in _core_c.pyx; ardeblur.backend picks
one at import time. All three functions are deterministic (fixed blocking,
sequential accumulation).
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"

# location rows per accumulation block; bounds the copied window matrix
_BLOCK_ROWS = 16


def conv2d_same(img, kern, zero_pad, flip):
    """Center-anchored same-size 2D correlation of img with kern.

    out[i,j] = sum_{l,m} img[i + l - L//2, j + m - M//2] * kern[l,m],
    out-of-range samples taken as zero (zero_pad) or the nearest edge value.
    flip=True uses the kernel reversed in both axes (true convolution),
    which is the adjoint of the unflipped transform under zero padding.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    kern = np.asarray(kern, dtype=np.float64)
    if flip:
        kern = kern[::-1, ::-1]
    l, m = kern.shape
    cr, cc = l // 2, m // 2
    mode = "constant" if zero_pad else "edge"
    pad = np.pad(img, ((cr, l - 1 - cr), (cc, m - 1 - cc)), mode=mode)
    out = np.zeros_like(img)
    h, w = img.shape
    for a in range(l):
        for b in range(m):
            v = kern[a, b]
            if v != 0.0:
                out += v * pad[a:a + h, b:b + w]
    return out


def windowed_gram(field, wr, wc, r0, r1, c0, c1):
    """Gram matrix of centered wr x wc windows of field.

    Window offsets are indexed lexicographically; the sample of offset (a,b)
    at location (i,j) is field[i - wr//2 + a, j - wc//2 + b]. Locations run
    over the half-open box [r0,r1) x [c0,c1), which must keep every sample
    in bounds. Returns the (wr*wc, wr*wc) matrix sum_w w w^T.
    """
    n = wr * wc
    g = np.zeros((n, n))
    for _, blk in _window_blocks(field, wr, wc, r0, r1, c0, c1):
        g += blk.T @ blk
    return g


def windowed_cross(field, target, wr, wc, r0, r1, c0, c1):
    """Cross vector v[(a,b)] = sum_{(i,j)} window(field)[(a,b)] * target[i,j].

    Same window and location conventions as windowed_gram; target is sampled
    at the window center (i,j).
    """
    target = np.ascontiguousarray(target, dtype=np.float64)
    v = np.zeros(wr * wc)
    for (rs, re), blk in _window_blocks(field, wr, wc, r0, r1, c0, c1):
        t = target[rs:re, c0:c1].ravel()
        v += blk.T @ t
    return v


def _window_blocks(field, wr, wc, r0, r1, c0, c1):
    """Yield ((row_start, row_end), block) with block shape (rows*cols, wr*wc)."""
    field = np.ascontiguousarray(field, dtype=np.float64)
    h, w = field.shape
    cr, cc = wr // 2, wc // 2
    if not (r0 >= cr and c0 >= cc and r1 <= h - (wr - 1 - cr) and c1 <= w - (wc - 1 - cc)):
        raise ValueError("window locations reach outside the field")
    if r0 >= r1 or c0 >= c1:
        raise ValueError("empty location box")
    win = sliding_window_view(field, (wr, wc))
    for rs in range(r0, r1, _BLOCK_ROWS):
        re = min(rs + _BLOCK_ROWS, r1)
        blk = win[rs - cr:re - cr, c0 - cc:c1 - cc].reshape(-1, wr * wc)
        yield (rs, re), blk
