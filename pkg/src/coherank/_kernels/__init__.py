"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
used otherwise. Set COHERANK_KERNELS=py|cy to force a backend (cy raises if
the extension is missing).
"""

import os

from . import _pykernels

_requested = os.environ.get("COHERANK_KERNELS", "auto").lower()
if _requested not in ("auto", "py", "cy"):
    raise ValueError(f"COHERANK_KERNELS must be auto, py, or cy (got {_requested!r})")

if _requested in ("auto", "cy"):
    try:
        from . import _cykernels as _impl

        BACKEND = "cy"
    except ImportError:
        if _requested == "cy":
            raise
        _impl = _pykernels
        BACKEND = "py"
else:
    _impl = _pykernels
    BACKEND = "py"

FNV_OFFSET_BASIS = _pykernels.FNV_OFFSET_BASIS
FNV_PRIME = _pykernels.FNV_PRIME

fnv1a64 = _impl.fnv1a64
hash_buckets = _impl.hash_buckets
bag_mean_forward = _impl.bag_mean_forward
bag_mean_backward = _impl.bag_mean_backward
topk_indices = _impl.topk_indices


def backend() -> str:
    """Name of the kernel backend selected at import ("cy" or "py")."""
    return BACKEND
