"""Engine backend selection.

The cycle engine exists twice: a Cython extension (``rfemu._core``) and
a pure-Python reference implementation with identical semantics.  The
compiled backend is preferred when importable; the ``RFEMU_BACKEND``
environment variable forces a choice (``compiled`` or ``pure``).
"""

import os

__all__ = ["BACKEND", "backend_name", "get_engine_class", "HAVE_CORE"]

try:
    from . import _core  # noqa: F401
    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False


def _select() -> str:
    forced = os.environ.get("RFEMU_BACKEND", "").strip().lower()
    if forced in ("compiled", "core", "fast"):
        if not HAVE_CORE:
            raise ImportError(
                "RFEMU_BACKEND requests the compiled backend but rfemu._core "
                "is not importable; rebuild the extension or unset the variable"
            )
        return "compiled"
    if forced in ("pure", "python", "purepy"):
        return "pure"
    if forced:
        raise ValueError(
            f"unknown RFEMU_BACKEND value {forced!r}; use 'compiled' or 'pure'"
        )
    return "compiled" if HAVE_CORE else "pure"


BACKEND = _select()


def backend_name() -> str:
    """Name of the engine backend selected at import time."""
    return BACKEND


def get_engine_class(backend: str = "auto"):
    """Resolve an engine class by backend name.

    Parameters
    ----------
    backend : str
        'auto' (import-time selection), 'compiled', or 'pure'.
    """
    from . import _engine_ref

    if backend == "auto":
        backend = BACKEND
    if backend in ("compiled", "core", "fast"):
        if not HAVE_CORE:
            raise ImportError("compiled backend requested but rfemu._core is missing")
        from . import _core
        return _core.CycleEngine
    if backend in ("pure", "python", "purepy"):
        return _engine_ref.CycleEngine
    raise ValueError(f"unknown backend {backend!r}")
