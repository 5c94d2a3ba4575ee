"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set ``CHERNLAB_FORCE_NUMPY=1`` to skip the extension (used by the benchmark
and by tests that compare the two implementations).
"""

import os

from . import _kernels_np

if os.environ.get("CHERNLAB_FORCE_NUMPY") == "1":
    kernels = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_np
        BACKEND = "numpy"


def backend_name() -> str:
    return BACKEND
