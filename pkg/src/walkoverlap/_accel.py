"""Backend switch for the hot kernels.

Numba-compiled kernels are used when numba imports and the environment
variable ``WALKOVERLAP_DISABLE_NUMBA`` is unset (or ``0``). Otherwise the
pure-numpy implementations run. Both backends return identical integers.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "WALKOVERLAP_DISABLE_NUMBA"


def numba_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not numba_disabled() else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
