"""Kernel backend selection.

The compiled extension is used when importable; set ``ERGOHJ_PURE_PYTHON=1``
to force the pure-Python kernels.
"""

import os

from ergohj import _pykernels

if os.environ.get("ERGOHJ_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from ergohj import _ckernels as kernels
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = "compiled" if kernels is not _pykernels else "python"

__all__ = ["kernels", "BACKEND"]
