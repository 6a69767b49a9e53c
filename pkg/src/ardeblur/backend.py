"""Selects the compute core at import time.

The compiled extension (_core_c) is used when present; otherwise the numpy
implementation (_core_np). Set ARDEBLUR_BACKEND=python or =c to force a
choice; forcing c when the extension is missing raises at import.
"""
import os

from . import _core_np

_forced = os.environ.get("ARDEBLUR_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _core_np
elif _forced == "c":
    from . import _core_c as _impl
elif _forced == "":
    try:
        from . import _core_c as _impl
    except ImportError:
        _impl = _core_np
else:
    raise ImportError(f"ARDEBLUR_BACKEND must be 'python' or 'c', got {_forced!r}")

BACKEND_NAME = _impl.BACKEND_NAME
conv2d_same = _impl.conv2d_same
windowed_gram = _impl.windowed_gram
windowed_cross = _impl.windowed_cross
