"""Numba toggle.

Set ``SELATTN_DISABLE_NUMBA=1`` to force the pure-numpy simulation path. The
flag is read once at import; tests can switch at runtime with
:func:`set_backend`.
"""
import os

_FLAG = os.environ.get("SELATTN_DISABLE_NUMBA", "").strip().lower()

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _numba_njit = None

DISABLED = _FLAG in ("1", "true", "yes", "on")


def _identity_njit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


njit = _identity_njit if DISABLED or not HAVE_NUMBA else _numba_njit

_backend = "numpy" if DISABLED or not HAVE_NUMBA else "numba"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and (DISABLED or not HAVE_NUMBA):
        raise RuntimeError("numba kernels are unavailable (not installed or disabled by SELATTN_DISABLE_NUMBA)")
    _backend = name
