"""Select the compiled kernels when available, else the numpy fallback.

Set ``NIECE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("NIECE_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

ST_INACTIVE = _kernels_py.ST_INACTIVE
ST_ACTIVE = _kernels_py.ST_ACTIVE
ST_ZERO = _kernels_py.ST_ZERO
ST_SUBUNIT = _kernels_py.ST_SUBUNIT
