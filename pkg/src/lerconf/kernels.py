"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is. ``LERCONF_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

LOSS_MAE = _kernels_py.LOSS_MAE
LOSS_PINBALL = _kernels_py.LOSS_PINBALL

_compiled = None
if os.environ.get("LERCONF_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Return a kernel module by name (``"cython"``, ``"python"``) or the active one."""
    if name is None:
        return impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available; rebuild the package")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None
