"""Kernel backend selection.

The compiled extension is preferred; set ``OTALIGN_PURE_PYTHON=1`` to force
the numpy implementations.
"""

import os

from otalign import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("OTALIGN_PURE_PYTHON") != "1":
    try:
        from otalign import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

l1_cdist = _active.l1_cdist
l1_pair_backward = _active.l1_pair_backward
greedy_match = _active.greedy_match
