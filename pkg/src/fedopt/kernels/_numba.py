import math

import numpy as np
from numba import njit

QUADRATIC = 0
LOGISTIC = 1


@njit(cache=True, nogil=True)
def loss_grad_scalar(kind, t, y):
    if kind == QUADRATIC:
        return t - y
    z = y * t
    if z > 0.0:
        e = math.exp(-z)
        return -y * e / (1.0 + e)
    return -y / (1.0 + math.exp(z))


@njit(cache=True, nogil=True)
def row_dots(indptr, indices, data, rows, w):
    out = np.empty(rows.shape[0])
    for r in range(rows.shape[0]):
        i = rows[r]
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * w[indices[p]]
        out[r] = s
    return out


@njit(cache=True, nogil=True)
def rows_axpy(indptr, indices, data, rows, coef, d):
    out = np.zeros(d)
    for r in range(rows.shape[0]):
        i = rows[r]
        c = coef[r]
        for p in range(indptr[i], indptr[i + 1]):
            out[indices[p]] += data[p] * c
    return out


@njit(cache=True, nogil=True)
def svrg_pass(indptr, indices, data, y, kind, order, w_start, w_anchor,
              anchor_dir, h, curv, scale):
    w = w_start.copy()
    d = w.shape[0]
    for step in range(order.shape[0]):
        i = order[step]
        t = 0.0
        t0 = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            t += data[p] * w[indices[p]]
        for p in range(indptr[i], indptr[i + 1]):
            t0 += data[p] * w_anchor[indices[p]]
        delta = loss_grad_scalar(kind, t, y[i]) - loss_grad_scalar(kind, t0, y[i])
        for j in range(d):
            w[j] = w[j] - h * (scale[j] * (curv * (w[j] - w_anchor[j])) + anchor_dir[j])
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w[j] = w[j] - h * (scale[j] * (delta * data[p]))
    return w
