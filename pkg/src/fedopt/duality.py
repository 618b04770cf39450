"""Ridge-regression duality: the dual method, the primal method, and their correspondence.

Sign convention: the dual is used in minimization form

    D(alpha) = 1/(2 lam n^2) ||X alpha||^2 + 1/(2n) ||alpha||^2 - (1/n) y^T alpha,

with ``X`` holding examples as columns. Weak duality reads ``f(w) >= -D(alpha)``
and the map ``w = X alpha / (lam n)`` sends dual iterates to primal ones.

Everything here assumes quadratic loss, lam > 0, and a balanced partition
(n_k = n / K); then the per-node objective 1/n_k sum phi_i equals K/n sum phi_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .algorithms import exact_quadratic_subproblem, map_nodes, ordered_sum
from .errors import DomainError, UnsupportedOperation
from .linalg import conjugate_gradient
from .model import Dataset, LossKind, full_gradient, objective
from .partition import Partition


def _require_ridge(dataset: Dataset):
    if dataset.loss is not LossKind.QUADRATIC:
        raise UnsupportedOperation("dual methods require quadratic loss")
    if not dataset.lam > 0:
        raise DomainError("dual methods require lambda > 0")


def _require_balanced(dataset: Dataset, partition: Partition):
    if partition.n != dataset.n:
        raise DomainError("partition does not match dataset size")
    if not partition.is_balanced():
        raise DomainError(f"balanced partition required (n_k = n/K), got sizes {partition.sizes.tolist()}")


@dataclass(frozen=True, eq=False)
class DualState:
    """Dual variables split by node: ``alpha[k]`` is indexed like ``partition.blocks[k]``."""

    alpha: tuple
    round: int = 0

    @classmethod
    def from_flat(cls, alpha, partition: Partition, round_: int = 0) -> "DualState":
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (partition.n,):
            raise DomainError("alpha must have one entry per example")
        return cls(tuple(alpha[b].copy() for b in partition.blocks), round_)

    @classmethod
    def zeros(cls, partition: Partition) -> "DualState":
        return cls(tuple(np.zeros(b.size) for b in partition.blocks), 0)

    def flat(self, partition: Partition) -> np.ndarray:
        out = np.empty(partition.n)
        for b, a in zip(partition.blocks, self.alpha):
            if a.shape != b.shape:
                raise DomainError("dual block does not match partition block")
            out[b] = a
        return out


@dataclass(frozen=True, eq=False)
class PrimalMethodState:
    w: np.ndarray
    g: np.ndarray  # (K, d), one correction vector per node
    round: int = 0


@dataclass(frozen=True)
class DualConfig:
    sigma: float
    rtol: float = 1e-10

    def check(self, K: int):
        if not 1.0 <= self.sigma <= K:
            raise DomainError(f"sigma must lie in [1, K={K}], got {self.sigma}")


def _X_alpha(dataset: Dataset, alpha) -> np.ndarray:
    rows = np.arange(dataset.n, dtype=np.int64)
    return kernels.rows_axpy(dataset.indptr, dataset.indices, dataset.data, rows,
                             np.asarray(alpha, np.float64), dataset.dim)


def _dual_value(dataset: Dataset, alpha) -> float:
    alpha = np.asarray(alpha, dtype=np.float64)
    n, lam = dataset.n, dataset.lam
    Xa = _X_alpha(dataset, alpha)
    return float(np.dot(Xa, Xa) / (2 * lam * n * n) + np.dot(alpha, alpha) / (2 * n)
                 - np.dot(dataset.y, alpha) / n)


def _flat_alpha(alpha, partition):
    return alpha.flat(partition) if isinstance(alpha, DualState) else np.asarray(alpha, np.float64)


def dual_objective(dataset: Dataset, partition: Partition, alpha) -> float:
    _require_ridge(dataset)
    _require_balanced(dataset, partition)
    return _dual_value(dataset, _flat_alpha(alpha, partition))


def primal_from_dual(dataset: Dataset, alpha) -> np.ndarray:
    """``w = (1 / (lam n)) sum_i alpha_i x_i`` for a flat ``alpha``."""
    if not dataset.lam > 0:
        raise DomainError("primal_from_dual requires lambda > 0")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (dataset.n,):
        raise DomainError("alpha must have one entry per example")
    return _X_alpha(dataset, alpha) / (dataset.lam * dataset.n)


def duality_gap(dataset: Dataset, w, alpha) -> float:
    """``f(w) + D(alpha)``.

    With D in minimization form, -D is the concave dual whose maximum equals
    min f, so f(w) >= -D(alpha) for every pair and the sum vanishes exactly at
    (w*, alpha*), where alpha*_i = y_i - x_i^T w*.
    """
    _require_ridge(dataset)
    return objective(dataset, w) + _dual_value(dataset, alpha)


def dual_method_round(dataset: Dataset, partition: Partition, state: DualState,
                      cfg: DualConfig, workers: int = 1) -> DualState:
    """Block proximal step on the dual.

    Node k solves ``((sigma/(lam n)) X_k^T X_k + I) h_k = y_k - X_k^T w - alpha_k``
    with ``w = X alpha / (lam n)``, which minimizes the separable upper bound
    of D around alpha (the system above is that bound's stationarity
    condition multiplied by n).
    """
    _require_ridge(dataset)
    _require_balanced(dataset, partition)
    cfg.check(partition.K)
    ds = dataset
    alpha = state.flat(partition)
    w = primal_from_dual(ds, alpha)
    c = cfg.sigma / (ds.lam * ds.n)

    def local(k):
        rows = partition.blocks[k]
        ak = state.alpha[k]

        def matvec(u):
            v = kernels.rows_axpy(ds.indptr, ds.indices, ds.data, rows, u, ds.dim)
            return c * kernels.row_dots(ds.indptr, ds.indices, ds.data, rows, v) + u

        rhs = ds.y[rows] - kernels.row_dots(ds.indptr, ds.indices, ds.data, rows, w) - ak
        h = conjugate_gradient(matvec, rhs, rtol=cfg.rtol, max_iter=10 * max(rows.size, 1))
        return ak + h

    return DualState(tuple(map_nodes(local, partition.K, workers)), state.round + 1)


def primal_method_init(dataset: Dataset, partition: Partition, alpha0, cfg: DualConfig) -> PrimalMethodState:
    """``w0 = X alpha0 / (lam n)`` and ``g_k = eta (K/n X_k alpha0_k - lam w0)``."""
    _require_ridge(dataset)
    _require_balanced(dataset, partition)
    cfg.check(partition.K)
    ds = dataset
    K = partition.K
    eta = K / cfg.sigma
    alpha0 = _flat_alpha(alpha0, partition)
    w0 = primal_from_dual(ds, alpha0)
    g = np.empty((K, ds.dim))
    for k, rows in enumerate(partition.blocks):
        Xa = kernels.rows_axpy(ds.indptr, ds.indices, ds.data, rows, alpha0[rows], ds.dim)
        g[k] = eta * (K / ds.n * Xa - ds.lam * w0)
    return PrimalMethodState(w0, g, 0)


def primal_method_round(dataset: Dataset, partition: Partition, state: PrimalMethodState,
                        cfg: DualConfig, workers: int = 1) -> PrimalMethodState:
    """Quadratic-perturbation step with eta = K/sigma and mu = lam (eta - 1).

    Node k exactly minimizes ``F_k(w) - a_k^T w + mu/2 ||w - w_t||^2`` with
    ``a_k = grad F_k(w_t) - (eta grad F_k(w_t) + g_k)``; the new iterate is the
    plain average, and ``g_k += lam eta (w_k - w_new)``.
    """
    _require_ridge(dataset)
    _require_balanced(dataset, partition)
    cfg.check(partition.K)
    ds = dataset
    K = partition.K
    eta = K / cfg.sigma
    mu = ds.lam * (eta - 1.0)
    w = state.w

    def local(k):
        view = ds.view(partition.blocks[k])
        gk = full_gradient(view, w)
        shift = gk - (eta * gk + state.g[k])
        return exact_quadratic_subproblem(view, w, shift, mu, cfg.rtol)

    w_nodes = map_nodes(local, K, workers)
    w_new = ordered_sum(w_nodes) / K
    g_new = np.array([state.g[k] + ds.lam * eta * (w_nodes[k] - w_new) for k in range(K)])
    return PrimalMethodState(w_new, g_new, state.round + 1)


def check_equivalence(dataset: Dataset, partition: Partition, alpha0, sigma: float,
                      rounds: int, rtol: float = 1e-10) -> float:
    """Run both methods from the same alpha0; return max_t ||w_t - X alpha_t / (lam n)||."""
    if rounds < 0:
        raise DomainError("rounds must be >= 0")
    cfg = DualConfig(sigma, rtol)
    dual = DualState.from_flat(_flat_alpha(alpha0, partition), partition)
    primal = primal_method_init(dataset, partition, alpha0, cfg)
    worst = float(np.linalg.norm(primal.w - primal_from_dual(dataset, dual.flat(partition))))
    for _ in range(rounds):
        dual = dual_method_round(dataset, partition, dual, cfg)
        primal = primal_method_round(dataset, partition, primal, cfg)
        dev = float(np.linalg.norm(primal.w - primal_from_dual(dataset, dual.flat(partition))))
        worst = max(worst, dev)
    return worst


def estimate_sigma(dataset: Dataset, partition: Partition) -> float:
    """Smallest sigma with X^T X <= sigma * blockdiag(X_k^T X_k).

    Equals the largest eigenvalue of the sum of orthogonal projectors onto
    range(X_k); computed densely, so meant for small instances. Reported
    only; the methods default to the always-valid sigma = K.
    """
    d = dataset.dim
    P = np.zeros((d, d))
    X = dataset.to_dense()
    for rows in partition.blocks:
        U, svals, _ = np.linalg.svd(X[rows].T, full_matrices=False)
        tol = svals.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
        Ur = U[:, svals > tol]
        P += Ur @ Ur.T
    return float(np.linalg.eigvalsh(P)[-1])
