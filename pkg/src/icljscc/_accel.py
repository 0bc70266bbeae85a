"""Backend switch for the compiled kernels.

Set ``ICLJSCC_BACKEND=numpy`` to force the pure-numpy fallbacks; the default
is ``numba`` whenever it imports cleanly.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

_requested = os.environ.get("ICLJSCC_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"ICLJSCC_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_backend = "numba" if (_requested == "numba" and numba is not None) else "numpy"


def backend():
    return _backend


def set_backend(name):
    """Switch backends at runtime (used by the benchmark and tests)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
