"""Compute-backend selection.

Hot kernels ship in two versions: numba-compiled scalar loops and plain numpy
array code. The environment variable CRCVOL_BACKEND picks one at import time:

  CRCVOL_BACKEND=numba   require numba (ImportError if missing)
  CRCVOL_BACKEND=numpy   force the pure-numpy path
  unset                  numba when importable, numpy otherwise

Both paths implement the same contracts and are equivalence-tested.
"""

import os

_requested = os.environ.get("CRCVOL_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ImportError(
        f"CRCVOL_BACKEND={_requested!r} not understood; use 'numba' or 'numpy'"
    )

if _requested == "numpy":
    HAS_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise
        HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"
