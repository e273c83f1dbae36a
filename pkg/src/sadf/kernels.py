"""Backend selection for the hot point-location and query kernels.

The compiled extension is used when importable; ``SADF_PURE_PYTHON=1``
forces the pure-Python implementation.
"""
import os
import warnings

from . import _core_py

if os.environ.get("SADF_PURE_PYTHON", "") not in ("", "0"):
    core = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as core
        BACKEND = "cython"
    except ImportError as exc:  # pragma: no cover - depends on the build
        warnings.warn(f"sadf: compiled kernels unavailable ({exc}); using pure Python")
        core = _core_py
        BACKEND = "python"

python_core = _core_py

__all__ = ["core", "python_core", "BACKEND"]
