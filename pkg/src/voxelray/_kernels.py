"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; otherwise the
pure Python/numpy fallback.  Setting ``VOXELRAY_BACKEND=python`` forces the
fallback.
"""
import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

python = _pykernels

try:
    from . import _core as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("VOXELRAY_BACKEND", "").lower() != "python":
    active = compiled
    BACKEND = "cython"
else:
    active = _pykernels
    BACKEND = "python"
    if compiled is None:
        logger.debug("compiled core unavailable; using the Python fallback")


def get(name=None):
    """Kernel module by name (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return active
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled is None:
            raise ImportError("voxelray._core is not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
