"""Pure-numpy kernels.

Every reduction here runs in the same order as the jitted loops (plain
left-to-right accumulation from 0.0), so both backends agree bit for bit.
"""
import math

import numpy as np

QUADRATIC = 0
LOGISTIC = 1


def loss_grad_scalar(kind, t, y):
    if kind == QUADRATIC:
        return t - y
    z = y * t
    if z > 0.0:
        e = math.exp(-z)
        return -y * e / (1.0 + e)
    return -y / (1.0 + math.exp(z))


def _segments(indptr, rows):
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    return starts, lens


def row_dots(indptr, indices, data, rows, w):
    starts, lens = _segments(indptr, rows)
    out = np.zeros(rows.shape[0])
    depth = int(lens.max()) if lens.size else 0
    # column-position sweep: row r accumulates its p-th term at sweep p
    for p in range(depth):
        sel = np.flatnonzero(lens > p)
        pos = starts[sel] + p
        out[sel] += data[pos] * w[indices[pos]]
    return out


def rows_axpy(indptr, indices, data, rows, coef, d):
    starts, lens = _segments(indptr, rows)
    total = int(lens.sum())
    if total == 0:
        return np.zeros(d)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    pos = offsets + np.arange(total)
    weights = data[pos] * np.repeat(coef, lens)
    # bincount accumulates sequentially in input order
    return np.bincount(indices[pos], weights=weights, minlength=d).astype(np.float64)


def svrg_pass(indptr, indices, data, y, kind, order, w_start, w_anchor,
              anchor_dir, h, curv, scale):
    w = w_start.copy()
    for i in order.tolist():
        lo, hi = indptr[i], indptr[i + 1]
        idx = indices[lo:hi]
        vals = data[lo:hi]
        t = 0.0
        for v in (vals * w[idx]).tolist():
            t += v
        t0 = 0.0
        for v in (vals * w_anchor[idx]).tolist():
            t0 += v
        delta = loss_grad_scalar(kind, t, y[i]) - loss_grad_scalar(kind, t0, y[i])
        w -= h * (scale * (curv * (w - w_anchor)) + anchor_dir)
        w[idx] -= h * (scale[idx] * (delta * vals))
    return w
