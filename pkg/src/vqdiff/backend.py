"""Kernel backend selection.

Hot inner loops (reverse-step mixtures, per-row truncation, categorical
sampling) ship in two functionally identical flavours: numba ``@njit``
kernels and plain numpy. The numba path is used when numba imports cleanly
and the environment variable ``VQDIFF_NUMBA`` is not set to ``0``/``false``.
Matrix-multiply heavy code (attention, feed-forward) stays on numpy BLAS
either way; numba buys nothing there.
"""

import os

_FALSEY = {"0", "false", "no", "off"}


def _env_wants_numba() -> bool:
    return os.environ.get("VQDIFF_NUMBA", "1").strip().lower() not in _FALSEY


try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _env_wants_numba()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
