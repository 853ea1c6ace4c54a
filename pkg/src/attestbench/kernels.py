"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
module steps in. Setting ATTESTBENCH_PURE_PYTHON=1 forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ATTESTBENCH_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

exhaustive_compare = _impl.exhaustive_compare
product_bfs = _impl.product_bfs
random_replay = _impl.random_replay

python_backend = _kernels_py


def compiled_backend():
    """The compiled module, or None when the extension was not built."""
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels
