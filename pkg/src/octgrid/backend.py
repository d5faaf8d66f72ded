"""Selection between the compiled kernel extension and the numpy fallback.

The compiled backend is preferred when the extension imported cleanly; the
environment variable ``OCTGRID_BACKEND`` (``native`` or ``python``) pins the
default explicitly.  Individual calls may also request a backend by name.
"""

from __future__ import annotations

import os

from . import _reference

try:
    from . import _kernels as _native
except ImportError:  # pragma: no cover - depends on the build environment
    _native = None

__all__ = ["HAVE_NATIVE", "available", "default_name", "get"]

HAVE_NATIVE = _native is not None


def available() -> tuple[str, ...]:
    return ("native", "python") if HAVE_NATIVE else ("python",)


def default_name() -> str:
    forced = os.environ.get("OCTGRID_BACKEND")
    if forced:
        if forced not in ("native", "python"):
            raise ValueError(f"OCTGRID_BACKEND must be 'native' or 'python', got {forced!r}")
        if forced == "native" and not HAVE_NATIVE:
            raise RuntimeError("OCTGRID_BACKEND=native but the compiled extension is unavailable")
        return forced
    return "native" if HAVE_NATIVE else "python"


def get(name: str | None = None):
    """The kernel module for ``name`` (default: best available)."""
    if name is None:
        name = default_name()
    if name == "native":
        if not HAVE_NATIVE:
            raise RuntimeError("compiled backend requested but octgrid._kernels is unavailable")
        return _native
    if name == "python":
        return _reference
    raise ValueError(f"unknown backend {name!r}")
