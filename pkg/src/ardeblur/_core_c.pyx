"""Compiled implementations of the hot kernels (see _core_np for contracts).

conv2d_same runs branch-free over a padded copy. windowed_gram exploits the
structure of window Grams: every entry is a box sum of a lagged product
field, so one summed-area table per lag gives all matching entries in O(1)
each. Sequential accumulation, no parallelism: results are deterministic.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "c"


def conv2d_same(img, kern, bint zero_pad, bint flip):
    """Center-anchored same-size 2D correlation; see _core_np.conv2d_same."""
    a = np.ascontiguousarray(img, dtype=np.float64)
    k = np.asarray(kern, dtype=np.float64)
    if flip:
        k = k[::-1, ::-1]
    cdef Py_ssize_t l = k.shape[0], m = k.shape[1]
    cdef Py_ssize_t cr = l // 2, cc = m // 2
    mode = "constant" if zero_pad else "edge"
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pad = np.pad(
        a, ((cr, l - 1 - cr), (cc, m - 1 - cc)), mode=mode)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] kk = np.ascontiguousarray(k)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((h, w), dtype=np.float64)
    cdef Py_ssize_t i, j, p, q
    cdef double acc
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for p in range(l):
                for q in range(m):
                    acc += kk[p, q] * pad[i + p, j + q]
            out[i, j] = acc
    return out


def windowed_gram(field, Py_ssize_t wr, Py_ssize_t wc,
                  Py_ssize_t r0, Py_ssize_t r1, Py_ssize_t c0, Py_ssize_t c1):
    """Gram of centered windows; see _core_np.windowed_gram."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1]
    _check_box(h, w, wr, wc, r0, r1, c0, c1)
    cdef Py_ssize_t n = wr * wc
    cdef Py_ssize_t cr = wr // 2, cc = wc // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = np.zeros((n, n), dtype=np.float64)
    # sat[i+1, j+1] = sum of prod[:i+1, :j+1]; one lagged product per pass
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sat = np.zeros((h + 1, w + 1), dtype=np.float64)
    cdef Py_ssize_t dr, dc, u0, u1, v0, v1, i, j, a, b, a1, b1, p, p1
    cdef Py_ssize_t ra, rb, ca, cb
    cdef double s
    for dr in range(0, wr):
        for dc in range(-(wc - 1), wc):
            if dr == 0 and dc < 0:
                continue  # mirror lag, G is symmetric
            # valid support of prod[i,j] = f[i,j] * f[i+dr, j+dc]
            u0 = 0 if dr >= 0 else -dr
            u1 = h - dr if dr >= 0 else h
            v0 = 0 if dc >= 0 else -dc
            v1 = w - dc if dc >= 0 else w
            for i in range(h + 1):
                for j in range(w + 1):
                    sat[i, j] = 0.0
            for i in range(u0, u1):
                for j in range(v0, v1):
                    sat[i + 1, j + 1] = f[i, j] * f[i + dr, j + dc]
            for i in range(1, h + 1):
                for j in range(1, w + 1):
                    sat[i, j] += sat[i - 1, j] + sat[i, j - 1] - sat[i - 1, j - 1]
            # every offset pair with this lag reads one box sum
            for a in range(max(0, -dr), min(wr, wr - dr)):
                a1 = a + dr
                for b in range(max(0, -dc), min(wc, wc - dc)):
                    b1 = b + dc
                    ra = r0 + a - cr
                    rb = r1 + a - cr
                    ca = c0 + b - cc
                    cb = c1 + b - cc
                    s = sat[rb, cb] - sat[ra, cb] - sat[rb, ca] + sat[ra, ca]
                    p = a * wc + b
                    p1 = a1 * wc + b1
                    g[p, p1] = s
                    g[p1, p] = s
    return g


def windowed_cross(field, target, Py_ssize_t wr, Py_ssize_t wc,
                   Py_ssize_t r0, Py_ssize_t r1, Py_ssize_t c0, Py_ssize_t c1):
    """Window-vs-center cross vector; see _core_np.windowed_cross."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.ascontiguousarray(target, dtype=np.float64)
    _check_box(f.shape[0], f.shape[1], wr, wc, r0, r1, c0, c1)
    cdef Py_ssize_t n = wr * wc
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t cr = wr // 2, cc = wc // 2
    cdef Py_ssize_t i, j, a, b, u
    cdef double tv
    for i in range(r0, r1):
        for j in range(c0, c1):
            tv = t[i, j]
            if tv == 0.0:
                continue
            u = 0
            for a in range(wr):
                for b in range(wc):
                    out[u] += tv * f[i - cr + a, j - cc + b]
                    u += 1
    return out


cdef _check_box(Py_ssize_t h, Py_ssize_t w, Py_ssize_t wr, Py_ssize_t wc,
                Py_ssize_t r0, Py_ssize_t r1, Py_ssize_t c0, Py_ssize_t c1):
    cdef Py_ssize_t cr = wr // 2, cc = wc // 2
    if not (r0 >= cr and c0 >= cc and r1 <= h - (wr - 1 - cr) and c1 <= w - (wc - 1 - cc)):
        raise ValueError("window locations reach outside the field")
    if r0 >= r1 or c0 >= c1:
        raise ValueError("empty location box")
