"""Backend selection for the compiled kernels.

Set ``CSWD_NUMBA=0`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless of the flag.
"""
import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _flag_enabled(value):
    return value.strip().lower() not in ("0", "false", "no", "off", "")


USE_NUMBA = HAS_NUMBA and _flag_enabled(os.environ.get("CSWD_NUMBA", "1"))


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAS_NUMBA:
        from numba import njit as _njit

        return _njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
