"""Select the kernel implementation at import time.

The compiled extension is preferred. Set ``MEML_BANDITS_PURE_PYTHON=1`` to
force the numpy fallback (useful for benchmarking and debugging).
"""

import os

from . import _kernels_py

_FORCE_PURE = os.environ.get("MEML_BANDITS_PURE_PYTHON", "").strip() not in ("", "0")

kernels = _kernels_py
BACKEND = "python"

if not _FORCE_PURE:
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

__all__ = ["kernels", "BACKEND"]
