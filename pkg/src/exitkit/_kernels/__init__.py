"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled extension is optional. Selection happens once at import:
setting EXITKIT_PURE_PYTHON=1 forces the fallback, otherwise the compiled
module is used when it built successfully. Both backends implement the
same functions with identical semantics; tests compare them directly.
"""

from __future__ import annotations

import os

if os.environ.get("EXITKIT_PURE_PYTHON", "") not in ("", "0"):
    from exitkit._kernels._pykernels import first_exceed, smooth_sorted

    BACKEND = "python"
else:
    try:
        from exitkit._kernels._ckernels import first_exceed, smooth_sorted

        BACKEND = "cython"
    except ImportError:
        from exitkit._kernels._pykernels import first_exceed, smooth_sorted

        BACKEND = "python"

__all__ = ["BACKEND", "first_exceed", "smooth_sorted"]
