"""Numba dispatch switch for the hot kernels.

The rendering and blending kernels ship in two variants: numba-compiled loops
and pure numpy. The environment variable FIELDFUSE_NUMBA picks the path:

* ``0`` / ``false`` / ``off``: force the numpy fallback,
* ``1`` / ``true`` / ``on``: require numba, raise if it cannot be imported,
* unset or anything else: use numba when importable.

FIELDFUSE_THREADS caps the numba thread pool (the numpy path ignores it).
"""

import os

_flag = os.environ.get("FIELDFUSE_NUMBA", "auto").strip().lower()

if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
else:
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:
        if _flag in ("1", "true", "on", "yes"):
            raise ImportError(
                "FIELDFUSE_NUMBA requests numba but it is not importable"
            )
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    _threads = os.environ.get("FIELDFUSE_THREADS", "").strip()
    if _threads:
        numba.set_num_threads(
            max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS))
        )
