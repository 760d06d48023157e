"""Kernel selection.

The compiled extension is used when importable; setting the environment
variable ``MDIPLUS_BACKEND=python`` forces the numpy fallback.
"""
import os

from mdiplus import _pykernels

if os.environ.get("MDIPLUS_BACKEND", "").lower() == "python":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from mdiplus import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
