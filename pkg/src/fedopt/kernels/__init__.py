"""Hot sparse kernels, dispatched to numba or numpy per ``FEDOPT_BACKEND``.

All arrays follow CSR layout: ``indptr`` (n+1), ``indices`` (nnz, int64),
``data`` (nnz, float64). ``rows`` and ``order`` hold global example indices.

``row_dots``      margins x_i^T w for the selected rows
``rows_axpy``     sum_r coef[r] * x_{rows[r]} as a dense vector
``svrg_pass``     one sequence of variance-reduced steps
                  w <- w - h (scale * [grad f_i(w) - grad f_i(anchor)] + anchor_dir),
                  where the bracket uses curvature ``curv`` for its dense part
"""
from .._backend import BACKEND
from . import _numpy as numpy_impl

if BACKEND == "numba":
    from . import _numba as numba_impl

    _impl = numba_impl
else:
    numba_impl = None
    _impl = numpy_impl

QUADRATIC = numpy_impl.QUADRATIC
LOGISTIC = numpy_impl.LOGISTIC

row_dots = _impl.row_dots
rows_axpy = _impl.rows_axpy
svrg_pass = _impl.svrg_pass

__all__ = ["BACKEND", "QUADRATIC", "LOGISTIC", "row_dots", "rows_axpy",
           "svrg_pass", "numpy_impl", "numba_impl"]
