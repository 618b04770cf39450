"""Kernel backend selection.

``FEDOPT_BACKEND=numpy`` forces the pure-numpy kernels; ``numba`` (default)
uses the jitted kernels when numba imports, and falls back to numpy otherwise.
"""
import os

_requested = os.environ.get("FEDOPT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"FEDOPT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        pass

BACKEND = "numba" if HAVE_NUMBA else "numpy"
