"""Sparse linear-predictor data model, losses, objectives and gradients.

Every per-example function carries the ridge term:
``f_i(w) = phi_i(x_i^T w) + lam/2 ||w||^2`` and a view's objective is the
mean of ``f_i`` over its examples.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, UnsupportedOperation


class LossKind(enum.Enum):
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"

    @property
    def code(self) -> int:
        return kernels.QUADRATIC if self is LossKind.QUADRATIC else kernels.LOGISTIC

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown loss kind {value!r}") from None


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Canonical sparse vector: strictly increasing indices, no stored zeros."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = _frozen(self.indices, np.int64).reshape(-1)
        val = _frozen(self.values, np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise DomainError("indices and values differ in length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise DomainError(f"index out of range for dim {self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise DomainError("indices must be strictly increasing")
            if np.any(val == 0.0):
                raise DomainError("zero values must not be stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.shape[0])

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], dim: int) -> "SparseVector":
        pairs = sorted((int(j), float(v)) for j, v in pairs if v != 0.0)
        return cls([j for j, _ in pairs], [v for _, v in pairs], dim)

    @property
    def nnz(self) -> int:
        return self.indices.size

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dot(self, w) -> float:
        s = 0.0
        for v in (self.values * np.asarray(w)[self.indices]).tolist():
            s += v
        return s

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        pairs = ", ".join(f"{j}: {v!r}" for j, v in zip(self.indices.tolist(), self.values.tolist()))
        return f"SparseVector({{{pairs}}}, dim={self.dim})"


def _check_labels(loss: LossKind, y) -> None:
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise DomainError("labels must be finite")
    if loss is LossKind.LOGISTIC and not np.all((y == 1.0) | (y == -1.0)):
        raise DomainError("logistic loss requires labels in {-1, +1}")


class Dataset:
    """Examples stored row-wise in CSR arrays, with loss kind and ridge weight.

    ``groups`` optionally carries a cluster id per example (the synthetic
    generator sets it; clustered partitioning consumes it).
    """

    def __init__(self, points: Sequence[tuple[SparseVector, float]], dim: int,
                 loss="logistic", lam: float = 0.0, groups=None):
        indptr = [0]
        indices, data, y = [], [], []
        for x, label in points:
            if x.dim != dim:
                raise DomainError(f"point has dim {x.dim}, dataset dim is {dim}")
            indices.append(x.indices)
            data.append(x.values)
            indptr.append(indptr[-1] + x.nnz)
            y.append(float(label))
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        self._init(np.asarray(indptr, np.int64), cat(indices, np.int64), cat(data, np.float64),
                   np.asarray(y, np.float64), dim, loss, lam, groups)

    @classmethod
    def from_csr(cls, indptr, indices, data, y, dim, loss="logistic", lam=0.0,
                 groups=None, validate=True) -> "Dataset":
        self = cls.__new__(cls)
        self._init(indptr, indices, data, y, dim, loss, lam, groups)
        if validate:
            self._validate_rows()
        return self

    def _init(self, indptr, indices, data, y, dim, loss, lam, groups):
        self.indptr = _frozen(indptr, np.int64)
        self.indices = _frozen(indices, np.int64)
        self.data = _frozen(data, np.float64)
        self.y = _frozen(y, np.float64)
        self.dim = int(dim)
        self.loss = LossKind.parse(loss)
        self.lam = float(lam)
        self.groups = None if groups is None else _frozen(groups, np.int64)
        if self.y.size < 1:
            raise DomainError("dataset needs at least one point")
        if self.indptr.shape != (self.y.size + 1,) or self.indptr[-1] != self.indices.size:
            raise DomainError("inconsistent CSR arrays")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise DomainError("lambda must be finite and >= 0")
        if self.groups is not None and self.groups.shape != self.y.shape:
            raise DomainError("groups must have one entry per point")
        _check_labels(self.loss, self.y)

    def _validate_rows(self):
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.dim):
            raise DomainError("feature index out of range")
        if np.any(self.data == 0.0) or not np.all(np.isfinite(self.data)):
            raise DomainError("stored values must be finite and nonzero")
        row_of = np.repeat(np.arange(self.n), np.diff(self.indptr))
        same_row = row_of[1:] == row_of[:-1]
        if np.any(np.diff(self.indices)[same_row] <= 0):
            raise DomainError("row indices must be strictly increasing")

    @property
    def n(self) -> int:
        return self.y.size

    def point(self, i: int) -> SparseVector:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseVector(self.indices[lo:hi], self.data[lo:hi], self.dim)

    @property
    def points(self) -> list[tuple[SparseVector, float]]:
        return [(self.point(i), float(self.y[i])) for i in range(self.n)]

    def with_lambda(self, lam: float) -> "Dataset":
        return Dataset.from_csr(self.indptr, self.indices, self.data, self.y, self.dim,
                                self.loss, lam, self.groups, validate=False)

    def with_loss(self, loss) -> "Dataset":
        return Dataset.from_csr(self.indptr, self.indices, self.data, self.y, self.dim,
                                loss, self.lam, self.groups, validate=False)

    def take(self, rows) -> "Dataset":
        """New dataset made of the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        lens = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.concatenate([[0], np.cumsum(lens)])
        pos = np.concatenate([np.arange(self.indptr[i], self.indptr[i + 1]) for i in rows]) \
            if rows.size else np.zeros(0, np.int64)
        groups = None if self.groups is None else self.groups[rows]
        return Dataset.from_csr(indptr, self.indices[pos], self.data[pos], self.y[rows],
                                self.dim, self.loss, self.lam, groups, validate=False)

    def to_dense(self) -> np.ndarray:
        """Data matrix with examples as rows (n x d)."""
        X = np.zeros((self.n, self.dim))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        X[rows, self.indices] = self.data
        return X

    def view(self, rows=None) -> "ProblemView":
        return ProblemView(self, rows)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.dim == other.dim and self.loss is other.loss and self.lam == other.lam
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.y, other.y))

    def __repr__(self):
        return (f"Dataset(n={self.n}, dim={self.dim}, nnz={self.indices.size}, "
                f"loss={self.loss.value}, lam={self.lam!r})")


class ProblemView:
    """A dataset restricted to an index set (a node's P_k), or the whole of it."""

    def __init__(self, dataset: Dataset, rows=None):
        self.dataset = dataset
        if rows is None:
            self.rows = np.arange(dataset.n, dtype=np.int64)
        else:
            rows = np.asarray(rows, dtype=np.int64).reshape(-1)
            if rows.size and (rows.min() < 0 or rows.max() >= dataset.n):
                raise DomainError("view index outside [0, n)")
            if np.unique(rows).size != rows.size:
                raise DomainError("view indices must be distinct")
            self.rows = rows
        self.rows.setflags(write=False)

    @property
    def m(self) -> int:
        return self.rows.size

    def __len__(self):
        return self.m


def as_view(obj) -> ProblemView:
    if isinstance(obj, ProblemView):
        return obj
    if isinstance(obj, Dataset):
        return obj.view()
    raise TypeError(f"expected Dataset or ProblemView, got {type(obj).__name__}")


def _nonempty(view: ProblemView) -> ProblemView:
    if view.m == 0:
        raise DomainError("empty view")
    return view


def _check_w(dataset: Dataset, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dataset.dim,):
        raise DomainError(f"w has shape {w.shape}, expected ({dataset.dim},)")
    return w


# -- losses ----------------------------------------------------------------

def _loss_values(kind: LossKind, t, y):
    if kind is LossKind.QUADRATIC:
        return 0.5 * (t - y) ** 2
    return np.logaddexp(0.0, -(y * t))


def _loss_derivs(kind: LossKind, t, y):
    if kind is LossKind.QUADRATIC:
        return t - y
    z = y * t
    e = np.exp(-np.abs(z))
    # -y * sigmoid(-z), branch chosen so exp never overflows
    return np.where(z > 0.0, -y * e / (1.0 + e), -y / (1.0 + e))


def _scalar_out(x):
    return float(x) if np.ndim(x) == 0 else x


def loss_value(kind, t, y):
    """phi(t) for label y: 1/2 (t - y)^2 or log(1 + exp(-y t))."""
    kind = LossKind.parse(kind)
    _check_labels(kind, y)
    return _scalar_out(_loss_values(kind, np.asarray(t, np.float64), np.asarray(y, np.float64)))


def loss_derivative(kind, t, y):
    kind = LossKind.parse(kind)
    _check_labels(kind, y)
    return _scalar_out(_loss_derivs(kind, np.asarray(t, np.float64), np.asarray(y, np.float64)))


def loss_conjugate(kind, s, y):
    """Convex conjugate phi*(s) = s^2/2 + s y of the quadratic loss."""
    kind = LossKind.parse(kind)
    if kind is not LossKind.QUADRATIC:
        raise UnsupportedOperation("conjugate is only implemented for quadratic loss")
    s = np.asarray(s, np.float64)
    return _scalar_out(0.5 * s * s + s * np.asarray(y, np.float64))


# -- objectives and gradients -------------------------------------------------

def margins(view, w) -> np.ndarray:
    view = as_view(view)
    ds = view.dataset
    w = _check_w(ds, w)
    return kernels.row_dots(ds.indptr, ds.indices, ds.data, view.rows, w)


def objective(view, w) -> float:
    view = _nonempty(as_view(view))
    ds = view.dataset
    w = _check_w(ds, w)
    t = margins(view, w)
    data_term = np.sum(_loss_values(ds.loss, t, ds.y[view.rows])) / view.m
    return float(data_term + 0.5 * ds.lam * np.dot(w, w))


def point_gradient_parts(view, i: int, w):
    """Sparse and dense parts of grad f_i(w).

    Returns ``(indices, values, lam_w)`` with
    ``grad f_i(w) = scatter(indices, values) + lam_w``.
    """
    view = as_view(view)
    ds = view.dataset
    w = _check_w(ds, w)
    if not np.any(view.rows == i):
        raise DomainError(f"example {i} is not in the view")
    x = ds.point(i)
    g = float(_loss_derivs(ds.loss, x.dot(w), ds.y[i]))
    return x.indices, g * x.values, ds.lam * w


def point_gradient(view, i: int, w) -> np.ndarray:
    idx, vals, dense = point_gradient_parts(view, i, w)
    out = dense.copy()
    out[idx] += vals
    return out


def full_gradient(view, w) -> np.ndarray:
    view = _nonempty(as_view(view))
    ds = view.dataset
    w = _check_w(ds, w)
    coef = _loss_derivs(ds.loss, margins(view, w), ds.y[view.rows])
    g = kernels.rows_axpy(ds.indptr, ds.indices, ds.data, view.rows, coef, ds.dim)
    return g / view.m + ds.lam * w


def hessian_vector(view, w, v) -> np.ndarray:
    """Product of the objective's Hessian at w with v."""
    view = _nonempty(as_view(view))
    ds = view.dataset
    w = _check_w(ds, w)
    if ds.loss is LossKind.QUADRATIC:
        curv = np.ones(view.m)
    else:
        p = -_loss_derivs(ds.loss, margins(view, w), np.ones(view.m))
        curv = p * (1.0 - p)
    xv = kernels.row_dots(ds.indptr, ds.indices, ds.data, view.rows, np.asarray(v, np.float64))
    out = kernels.rows_axpy(ds.indptr, ds.indices, ds.data, view.rows, curv * xv, ds.dim)
    return out / view.m + ds.lam * v


def classification_error(dataset: Dataset, w) -> float:
    """Fraction of misclassified points; a zero margin predicts +1."""
    if dataset.loss is not LossKind.LOGISTIC:
        raise UnsupportedOperation("classification error needs binary (logistic) labels")
    t = margins(dataset, w)
    pred = np.where(t >= 0.0, 1.0, -1.0)
    return float(np.mean(pred != dataset.y))
