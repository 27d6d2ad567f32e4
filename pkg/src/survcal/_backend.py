"""Select the compiled kernels when available, else the numpy fallback."""

import os

from survcal import _pure

if os.environ.get("SURVCAL_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pure
    BACKEND = "python"
else:
    try:
        from survcal import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pure
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
