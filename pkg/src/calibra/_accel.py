"""Backend selection for the hot numeric kernels.

Two kernels (the Monte Carlo auction round loop and the simplex pivot loop)
ship in two flavours: a numba ``@njit`` version and a pure-numpy fallback.
The default is numba when importable; ``CALIBRA_BACKEND=numpy`` (or a set
``NUMBA_DISABLE_JIT``) forces the fallback.  ``benchmarks/bench_backends.py``
compares the two.
"""

from __future__ import annotations

import os

BACKENDS = ("numba", "numpy")
_ENV = "CALIBRA_BACKEND"


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend(override: str | None = None) -> str:
    """Pick the kernel backend: explicit override > env flag > availability."""
    choice = override or os.environ.get(_ENV, "").lower() or None
    if choice is not None:
        if choice not in BACKENDS:
            raise ValueError(f"unknown backend {choice!r}; expected one of {BACKENDS}")
        if choice == "numba" and not numba_available():
            raise RuntimeError("numba backend requested but numba is not importable")
        return choice
    if os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        return "numpy"
    return "numba" if numba_available() else "numpy"


def jit_compile(py_func):
    """Compile a kernel with numba, caching the machine code on disk."""
    from numba import njit

    return njit(cache=True)(py_func)
