"""Optional numba acceleration.

Hot loops are written twice: once as a numba ``@njit`` kernel and once as a
vectorised numpy routine.  :func:`accelerated` pairs the two and dispatches on
the active backend at call time.  The default backend is numba when it is
importable, unless the environment variable ``MVMLAB_DISABLE_NUMBA`` is set
to a non-empty value other than ``0``.
"""

from __future__ import annotations

import contextlib
import functools
import os

ENV_FLAG = "MVMLAB_DISABLE_NUMBA"

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    flag = os.environ.get(ENV_FLAG, "").strip().lower()
    return flag not in ("", "0", "false", "no")


_state = {"backend": "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend() -> str:
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return _state["backend"]


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["backend"] = name


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch backend inside a ``with`` block."""
    previous = backend()
    set_backend(name)
    try:
        yield
    finally:
        _state["backend"] = previous


def accelerated(compiled, fallback):
    """Return a dispatcher calling ``compiled`` or ``fallback``.

    Both callables must accept the same arguments and return equal results up
    to floating point reassociation.
    """

    @functools.wraps(fallback)
    def dispatch(*args):
        if _state["backend"] == "numba":
            return compiled(*args)
        return fallback(*args)

    dispatch.compiled = compiled
    dispatch.fallback = fallback
    return dispatch
