"""Kernel selection: compiled Cython core when available, numpy fallback.

Set ``EHRENFESTDB_FORCE_PYTHON=1`` to skip the compiled kernel (used by the
benchmark and the cross-kernel tests).
"""

from __future__ import annotations

import os

from . import pykernel

try:  # pragma: no cover - depends on the build
    from . import _core
except ImportError:  # pragma: no cover
    _core = None


def available_kernels() -> dict:
    kernels = {"python": pykernel}
    if _core is not None:
        kernels["cython"] = _core
    return kernels


def get_kernel(name: str | None = None):
    """Return the kernel module to use. ``None`` selects automatically."""
    kernels = available_kernels()
    if name is None:
        if os.environ.get("EHRENFESTDB_FORCE_PYTHON", "") not in ("", "0"):
            return kernels["python"]
        return kernels.get("cython", kernels["python"])
    try:
        return kernels[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; available: {sorted(kernels)}") from None


def active_kernel_name() -> str:
    return get_kernel().KERNEL_NAME
