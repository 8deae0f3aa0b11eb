"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly; otherwise the numpy
implementations are used. Set ``SIMDISTILL_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
softmax_kl_rows = _kernels_py.softmax_kl_rows
hungarian_min = _kernels_py.hungarian_min

if os.environ.get("SIMDISTILL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        softmax_kl_rows = _ckernels.softmax_kl_rows
        hungarian_min = _ckernels.hungarian_min

__all__ = ["BACKEND", "softmax_kl_rows", "hungarian_min"]
