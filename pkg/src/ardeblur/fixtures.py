"""Synthetic blur fixtures: analytic kernels, textures, seeded noise.

Everything here is deterministic given the seed, so round-trip tests can
assert bit-identical regeneration.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .image import Image, as_plane
from .ops import BoundaryMode, conv_same

__all__ = [
    "NoiseSpec", "SyntheticFixture", "gaussian_kernel", "motion_h_kernel",
    "motion_diag_kernel", "texture_white", "texture_smooth",
    "texture_multiscale", "make_fixture",
]


@dataclass(frozen=True)
class NoiseSpec:
    """kind is one of none, gaussian (level = std), impulsive (level =
    corrupted-pixel fraction, split evenly between 0 and 1 hits)."""
    kind: str = "none"
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "impulsive"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("noise level must be >= 0")


@dataclass(frozen=True)
class SyntheticFixture:
    clean: Image
    true_psf: np.ndarray
    blurred: Image
    noise: NoiseSpec
    seed: int


def gaussian_kernel(l, m, sigma=1.5):
    """Sampled isotropic Gaussian on an odd l x m grid, sum 1.

    sigma near zero (say 1e-3) collapses onto the center tap, the
    no-blur limit.
    """
    _check_dims(l, m)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    r = np.arange(l, dtype=np.float64) - l // 2
    c = np.arange(m, dtype=np.float64) - m // 2
    k = np.exp(-(r[:, None] ** 2 + c[None, :] ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def motion_h_kernel(l, m, length=5):
    """Horizontal box motion: a centered row of `length` taps of 1/length."""
    _check_dims(l, m)
    if not 1 <= length <= m:
        raise ValueError(f"length must be in [1, {m}]")
    k = np.zeros((l, m))
    start = m // 2 - length // 2
    k[l // 2, start:start + length] = 1.0 / length
    return k


def motion_diag_kernel(l, m, length=5, angle_deg=45.0):
    """Straight motion streak at an angle, bilinearly splatted, sum 1.

    The streak's half-extent must fit the support along both axes.
    """
    _check_dims(l, m)
    if length < 1:
        raise ValueError("length must be >= 1")
    th = math.radians(angle_deg)
    ext = (length - 1) / 2.0
    if ext * abs(math.sin(th)) > l // 2 + 1e-9 or \
            ext * abs(math.cos(th)) > m // 2 + 1e-9:
        raise ValueError(f"length {length} at {angle_deg} deg exceeds "
                         f"{l}x{m} support")
    k = np.zeros((l, m))
    cr, cc = l // 2, m // 2
    n = max(int(math.ceil(length * 8)), 2)
    for t in np.linspace(-ext, ext, n):
        r = cr + t * math.sin(th)
        c = cc + t * math.cos(th)
        r0, c0 = int(math.floor(r)), int(math.floor(c))
        fr, fc = r - r0, c - c0
        for dr, wr in ((0, 1.0 - fr), (1, fr)):
            for dc, wc in ((0, 1.0 - fc), (1, fc)):
                w = wr * wc
                if w > 0 and 0 <= r0 + dr < l and 0 <= c0 + dc < m:
                    k[r0 + dr, c0 + dc] += w
    return k / k.sum()


@lru_cache(maxsize=8)
def _texture_cache(kind, n, seed):
    rng = np.random.default_rng(seed)
    if kind == "white":
        t = rng.random((n, n))
    elif kind == "smooth":
        t = conv_same(rng.random((n, n)), gaussian_kernel(5, 5, 0.8),
                      BoundaryMode.REPLICATE)
    else:  # multiscale
        t = rng.random((n, n)) * 0.5
        t += conv_same(rng.random((n, n)), gaussian_kernel(9, 9, 1.5),
                       BoundaryMode.REPLICATE) * 0.3
        t += conv_same(rng.random((n, n)), gaussian_kernel(21, 21, 4.0),
                       BoundaryMode.REPLICATE) * 0.2
    t = (t - t.min()) / (t.max() - t.min())
    t.setflags(write=False)
    return t


def texture_white(n=512, seed=11):
    """Uniform white-noise texture in [0, 1], full spectral band."""
    return _texture_cache("white", n, seed).copy()


def texture_smooth(n=512, seed=11):
    """Mildly low-passed noise texture; its own spectrum already rolls
    off, so blur-detection logic treats it as blurred."""
    return _texture_cache("smooth", n, seed).copy()


def texture_multiscale(n=512, seed=11):
    """Noise mixed over three correlation lengths, a crude natural-image
    stand-in that keeps energy at all bands."""
    return _texture_cache("multiscale", n, seed).copy()


def make_fixture(clean, psf_kind, dims, param=None, angle_deg=45.0,
                 noise=None, seed=0):
    """Blur a clean image with an analytic kernel and optional seeded noise.

    Parameters
    ----------
    clean : 2D array or Image
    psf_kind : {'gaussian', 'motion_h', 'motion_diag'}
        gaussian takes param = sigma (default 1.5); the motion kinds take
        param = streak length (default 5); motion_diag also uses angle_deg.
    dims : (l, m)
        Odd kernel support.
    noise : NoiseSpec or None
    seed : int
        Generator seed for the noise draw; stored for regeneration.

    Returns
    -------
    SyntheticFixture
    """
    if isinstance(clean, Image):
        img = clean
    else:
        img = Image.from_plane(as_plane(clean))
    l, m = dims
    if psf_kind == "gaussian":
        h = gaussian_kernel(l, m, 1.5 if param is None else param)
    elif psf_kind == "motion_h":
        h = motion_h_kernel(l, m, 5 if param is None else int(param))
    elif psf_kind == "motion_diag":
        h = motion_diag_kernel(l, m, 5 if param is None else int(param),
                               angle_deg)
    else:
        raise ValueError(f"unknown psf_kind {psf_kind!r}")
    noise = NoiseSpec() if noise is None else noise
    blurred = img.map(lambda p: conv_same(p, h, BoundaryMode.REPLICATE))
    rng = np.random.default_rng(seed)
    if noise.kind == "gaussian" and noise.level > 0:
        blurred = blurred.map(lambda p: p + rng.normal(0.0, noise.level,
                                                       p.shape))
    elif noise.kind == "impulsive" and noise.level > 0:
        blurred = blurred.map(lambda p: _salt_pepper(p, noise.level, rng))
    return SyntheticFixture(clean=img, true_psf=h, blurred=blurred,
                            noise=noise, seed=seed)


def _salt_pepper(plane, level, rng):
    u = rng.random(plane.shape)
    out = plane.copy()
    out[u < level / 2.0] = 1.0
    out[(u >= level / 2.0) & (u < level)] = 0.0
    return out


def _check_dims(l, m):
    if l < 1 or m < 1 or l % 2 == 0 or m % 2 == 0:
        raise ValueError(f"kernel dims must be odd and positive, got {l}x{m}")
