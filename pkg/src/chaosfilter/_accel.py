"""Numba acceleration switch.

Hot kernels in :mod:`chaosfilter._kernels` come in two flavours: a numba
``@njit`` build and a pure-numpy build. The numba build is used when numba
imports cleanly and the environment variable ``CHAOSFILTER_DISABLE_NUMBA``
is unset (or set to ``0``/``false``). Setting the variable forces the numpy
path, which is handy for debugging and for the backend benchmark.
"""

import os


def _flag_disabled() -> bool:
    val = os.environ.get("CHAOSFILTER_DISABLE_NUMBA", "0")
    return val.strip().lower() not in ("", "0", "false", "no")


if not _flag_disabled():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):  # noqa: D103 - passthrough decorator
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator
