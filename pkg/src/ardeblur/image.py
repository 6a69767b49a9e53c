"""Image and kernel value types, norms, quality metrics, and file I/O.

Images are float64 planes in [0, 1] after loading. A multichannel image is a
tuple of 1 or 3 planes of identical shape. Kernels are small odd-sized float64
grids; PSF-role kernels are normalized to unit sum.
"""
import math
import os

import numpy as np

__all__ = [
    "Image", "as_plane", "as_kernel", "normalize_psf", "luminance",
    "mean_abs", "mean_sq", "psnr", "ncc",
    "load_image", "save_image", "load_kernel", "save_kernel",
]


def as_plane(a):
    """Coerce to a finite 2D float64 array.

    Raises ValueError on wrong rank or non-finite entries.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D plane, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("empty plane")
    if not np.all(np.isfinite(a)):
        raise ValueError("plane contains non-finite values")
    return a


def as_kernel(k):
    """Coerce to a 2D float64 kernel with odd dimensions."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2:
        raise ValueError(f"expected a 2D kernel, got shape {k.shape}")
    l, m = k.shape
    if l % 2 == 0 or m % 2 == 0:
        # odd sizes keep the center pixel well defined
        raise ValueError(f"kernel dimensions must be odd, got {l}x{m}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite values")
    return k


def normalize_psf(k):
    """Scale a kernel so its elements sum to 1."""
    k = as_kernel(k)
    s = k.sum()
    if abs(s) < 1e-12 * np.abs(k).sum():
        raise ValueError("kernel sum is numerically zero, cannot normalize")
    return k / s


class Image:
    """An ordered tuple of 1 (grayscale) or 3 (RGB) equally sized planes."""

    __slots__ = ("planes",)

    def __init__(self, planes):
        planes = tuple(as_plane(p) for p in planes)
        if len(planes) not in (1, 3):
            raise ValueError(f"expected 1 or 3 channels, got {len(planes)}")
        shape = planes[0].shape
        for p in planes[1:]:
            if p.shape != shape:
                raise ValueError("channel shapes differ")
        self.planes = planes

    @property
    def shape(self):
        return self.planes[0].shape

    @property
    def n_channels(self):
        return len(self.planes)

    @classmethod
    def from_plane(cls, plane):
        return cls((plane,))

    def map(self, fn):
        """Apply a plane -> plane function to every channel."""
        return Image(tuple(fn(p) for p in self.planes))


def luminance(img):
    """Single luminance plane of an Image (BT.601 weights for RGB)."""
    if img.n_channels == 1:
        return img.planes[0]
    r, g, b = img.planes
    return 0.299 * r + 0.587 * g + 0.114 * b


def mean_abs(a):
    """Mean of absolute values, the discrete <|.|>."""
    return float(np.mean(np.abs(a)))


def mean_sq(a):
    """Mean of squared values, the discrete <||.||^2>."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.mean(a * a))


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB with peak value 1.0.

    Accepts planes or Images (MSE averaged over channels). Identical inputs
    give math.inf.
    """
    if isinstance(reference, Image) or isinstance(test, Image):
        rp = reference.planes if isinstance(reference, Image) else (as_plane(reference),)
        tp = test.planes if isinstance(test, Image) else (as_plane(test),)
        if len(rp) != len(tp) or rp[0].shape != tp[0].shape:
            raise ValueError("image dimensions differ")
        mse = float(np.mean([mean_sq(r - t) for r, t in zip(rp, tp)]))
    else:
        reference = as_plane(reference)
        test = as_plane(test)
        if reference.shape != test.shape:
            raise ValueError("plane dimensions differ")
        mse = mean_sq(reference - test)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ncc(a, b):
    """Zero-mean normalized cross-correlation of two same-shape grids."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("shapes differ")
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0.0:
        return 0.0
    return float(a @ b) / den


# ---------------------------------------------------------------------------
# file I/O

def _read_pnm(path):
    with open(path, "rb") as f:
        data = f.read()
    # header tokens may be separated by whitespace and '#' comments
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4:
        raise ValueError(f"truncated PNM header in {path}")
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} (only binary P5/P6)")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval not in (255, 65535):
        raise ValueError(f"unsupported PNM maxval {maxval} (use 255 or 65535)")
    i += 1  # single whitespace byte after maxval
    nch = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval == 65535 else np.uint8
    count = width * height * nch
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    if raw.size != count:
        raise ValueError(f"truncated PNM pixel data in {path}")
    arr = raw.reshape(height, width, nch).astype(np.float64) / maxval
    return Image(tuple(arr[:, :, c] for c in range(nch)))


def _write_pnm(img, path):
    nch = img.n_channels
    magic = b"P5" if nch == 1 else b"P6"
    h, w = img.shape
    bytes_ = _quantize8(img)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(bytes_.tobytes())


def _quantize8(img):
    """Clamp to [0,1] and quantize round-half-up to uint8, HxWxC layout."""
    stack = np.stack(img.planes, axis=-1)
    stack = np.clip(stack, 0.0, 1.0)
    return np.floor(stack * 255.0 + 0.5).astype(np.uint8)


def load_image(path):
    """Load an 8- or 16-bit grayscale or RGB image (PNG, PGM, PPM).

    Returns an Image with channels scaled to [0, 1] (8-bit by 255, 16-bit
    by 65535).
    """
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        return _read_pnm(path)
    if ext != ".png":
        raise ValueError(f"unsupported image format {ext!r}")
    import cv2
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ValueError(f"could not read image {path}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValueError(f"unsupported PNG sample type {arr.dtype}")
    if arr.ndim == 2:
        return Image((arr.astype(np.float64) / scale,))
    if arr.ndim == 3 and arr.shape[2] == 3:
        arr = arr[:, :, ::-1]  # BGR to RGB
        a = arr.astype(np.float64) / scale
        return Image((a[:, :, 0], a[:, :, 1], a[:, :, 2]))
    if arr.ndim == 3 and arr.shape[2] == 4:
        raise ValueError("alpha channels are not supported")
    raise ValueError(f"unsupported channel layout {arr.shape}")


def save_image(img, path):
    """Write an Image as 8-bit PNG/PGM/PPM chosen by extension.

    Values are clamped to [0, 1] and quantized round-half-up.
    """
    if not isinstance(img, Image):
        img = Image.from_plane(as_plane(img))
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        want = 1 if ext == ".pgm" else 3
        if img.n_channels != want:
            raise ValueError(f"{ext} requires {want} channel(s), image has {img.n_channels}")
        _write_pnm(img, path)
        return
    if ext != ".png":
        raise ValueError(f"unsupported image format {ext!r}")
    import cv2
    bytes_ = _quantize8(img)
    if img.n_channels == 3:
        bytes_ = bytes_[:, :, ::-1]  # RGB to BGR
    else:
        bytes_ = bytes_[:, :, 0]
    if not cv2.imwrite(str(path), bytes_):
        raise ValueError(f"could not write image {path}")


def save_kernel(k, path):
    """Write a kernel in the text format: 'L M' header then L rows of floats."""
    k = as_kernel(k)
    l, m = k.shape
    with open(path, "w") as f:
        f.write(f"{l} {m}\n")
        for row in k:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_kernel(path):
    """Read a kernel written by save_kernel."""
    with open(path) as f:
        tokens = f.read().split()
    if len(tokens) < 2:
        raise ValueError(f"truncated kernel file {path}")
    l, m = int(tokens[0]), int(tokens[1])
    vals = tokens[2:]
    if len(vals) != l * m:
        raise ValueError(f"kernel file {path}: expected {l * m} values, got {len(vals)}")
    return as_kernel(np.array(vals, dtype=np.float64).reshape(l, m))
