"""Tree kernels with backend selection at import time.

The compiled Cython extension is preferred; the pure NumPy twin is used
when the extension is unavailable or ``BLOCKFILL_PURE_KERNELS=1`` is set.
Both expose the same two symbols and produce bit-identical results.
"""

import os

from . import pure

if os.environ.get("BLOCKFILL_PURE_KERNELS") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - build-env dependent
        _impl = pure
        BACKEND = "pure"

TreeGrower = _impl.TreeGrower
apply_forest = _impl.apply_forest


def available_backends() -> dict:
    """Importable backends by name (used by the kernel benchmark)."""
    backends = {"pure": pure}
    try:
        from . import _ckernels

        backends["compiled"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return backends
