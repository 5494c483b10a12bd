"""Kernel backend selection.

Hot numeric kernels ship in two flavours: numba ``@njit``-compiled and
plain numpy/Python. The active flavour is chosen once at import time from
the ``PFDIFFUSION_BACKEND`` environment variable:

* ``auto`` (default) - numba if importable, else pure Python
* ``numba``          - require numba, raise if unavailable
* ``numpy``          - force the pure-Python/numpy fallback

Both flavours draw randomness outside the kernels, so a given seed
produces the same resampling decisions on either backend.
"""

import os

_choice = os.environ.get("PFDIFFUSION_BACKEND", "auto").strip().lower()

if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"PFDIFFUSION_BACKEND must be 'auto', 'numba' or 'numpy', got {_choice!r}"
    )

NUMBA_ENABLED = False
if _choice in ("auto", "numba"):
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        if _choice == "numba":
            raise RuntimeError(
                "PFDIFFUSION_BACKEND=numba but numba is not importable"
            )


def jit_kernel(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it as-is."""
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True, fastmath=False)(fn)
    return fn


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
