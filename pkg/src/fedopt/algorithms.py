"""Optimization algorithms counted in rounds of communication.

Each ``*_round`` function maps a ``RoundState`` to the next one, performing
exactly one broadcast of the global model and one aggregation. Node-local
work runs in node order, or on a thread pool when ``workers > 1``; the
aggregation always sums in node-index order, so results do not depend on
``workers``.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, UnsupportedOperation
from .linalg import conjugate_gradient
from .model import Dataset, LossKind, ProblemView, as_view, full_gradient
from .partition import Partition, SparsityStats


@dataclass(frozen=True, eq=False)
class RoundState:
    w: np.ndarray
    round: int = 0

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


class Sampling(enum.Enum):
    UNIFORM = "uniform"          # with replacement
    PERMUTATION = "permutation"  # consecutive random permutations


@dataclass(frozen=True)
class SvrgConfig:
    m: int
    h: float
    sampling: Sampling = Sampling.UNIFORM

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        if self.m < 1:
            raise DomainError("SVRG needs m >= 1 stochastic steps per epoch")
        if not self.h > 0:
            raise DomainError("SVRG stepsize must be > 0")


@dataclass(frozen=True)
class ExactQuadratic:
    rtol: float = 1e-10


@dataclass(frozen=True)
class SvrgInner:
    svrg: SvrgConfig
    epochs: int = 1


@dataclass(frozen=True)
class DaneConfig:
    eta: float = 1.0
    mu: float = 0.0
    local_solver: ExactQuadratic | SvrgInner = field(default_factory=ExactQuadratic)

    def __post_init__(self):
        if self.mu < 0:
            raise DomainError("DANE needs mu >= 0")


@dataclass(frozen=True)
class FsvrgConfig:
    """``use_scaling=False`` replaces S_k and A by identities."""

    h: float
    stats: SparsityStats
    use_scaling: bool = True
    passes: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("FSVRG stepsize must be > 0")
        if self.passes < 1:
            raise DomainError("FSVRG needs at least one local pass")


def node_rng(seed: int, round_: int, k: int) -> np.random.Generator:
    """Independent stream for node k in round ``round_``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round_), int(k)]))


def sample_indices(rng: np.random.Generator, rows: np.ndarray, m: int,
                   sampling: Sampling = Sampling.UNIFORM) -> np.ndarray:
    if sampling is Sampling.UNIFORM:
        return rows[rng.integers(0, rows.size, size=m)]
    reps = -(-m // rows.size)
    return np.concatenate([rng.permutation(rows) for _ in range(reps)])[:m]


def map_nodes(fn: Callable[[int], np.ndarray], K: int, workers: int = 1) -> list:
    if workers <= 1 or K == 1:
        return [fn(k) for k in range(K)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(K)))


def ordered_sum(vectors: Sequence[np.ndarray]) -> np.ndarray:
    total = np.zeros_like(vectors[0])
    for v in vectors:
        total += v
    return total


def _pass(ds: Dataset, order, w_start, w_anchor, anchor_dir, h, curv, scale):
    return kernels.svrg_pass(ds.indptr, ds.indices, ds.data, ds.y, ds.loss.code,
                             np.ascontiguousarray(order, dtype=np.int64),
                             np.asarray(w_start, np.float64), np.asarray(w_anchor, np.float64),
                             np.asarray(anchor_dir, np.float64), float(h), float(curv),
                             np.asarray(scale, np.float64))


# -- single node ---------------------------------------------------------------

def gd_round(view, state: RoundState, h: float) -> RoundState:
    """One full-gradient step ``w - h grad f(w)``."""
    if h < 0:
        raise DomainError("stepsize must be >= 0")
    g = full_gradient(view, state.w)
    return RoundState(state.w - h * g, state.round + 1)


def svrg_run(view, w0, cfg: SvrgConfig, epochs: int, seed: int = 0,
             start_round: int = 0) -> RoundState:
    """SVRG: per epoch one full gradient at the anchor, then ``cfg.m`` stochastic steps.

    Each epoch counts as one round; epoch t draws its samples from
    ``node_rng(seed, t, 0)``.
    """
    if epochs < 1:
        raise DomainError("epochs must be >= 1")
    view = as_view(view)
    ds = view.dataset
    w = np.array(w0, dtype=np.float64)
    ones = np.ones(ds.dim)
    t = start_round
    for _ in range(epochs):
        g = full_gradient(view, w)
        order = sample_indices(node_rng(seed, t, 0), view.rows, cfg.m, cfg.sampling)
        w = _pass(ds, order, w, w, g, cfg.h, ds.lam, ones)
        t += 1
    return RoundState(w, t)


def smoothness_estimate(view, iters: int = 100, seed: int = 0) -> float:
    """Upper estimate of the gradient Lipschitz constant via power iteration.

    Uses ``max eig((1/m) sum x_i x_i^T) * c + lam`` with c = 1 (quadratic)
    or 1/4 (logistic).
    """
    view = as_view(view)
    ds = view.dataset
    v = np.random.default_rng(seed).standard_normal(ds.dim)
    v /= np.linalg.norm(v)
    ev = 0.0
    for _ in range(iters):
        xv = kernels.row_dots(ds.indptr, ds.indices, ds.data, view.rows, v)
        u = kernels.rows_axpy(ds.indptr, ds.indices, ds.data, view.rows, xv, ds.dim) / view.m
        ev = float(np.linalg.norm(u))
        if ev == 0.0:
            break
        v = u / ev
    c = 1.0 if ds.loss is LossKind.QUADRATIC else 0.25
    return c * ev + ds.lam


# -- distributed -----------------------------------------------------------------

def exact_quadratic_subproblem(view: ProblemView, w_t, linear_shift, mu: float,
                               rtol: float = 1e-10) -> np.ndarray:
    """Exact minimizer of ``F_k(w) - shift^T w + mu/2 ||w - w_t||^2`` for quadratic loss.

    Solves ``((1/n_k) X_k X_k^T + (lam + mu) I) w = (1/n_k) X_k y_k + shift + mu w_t``
    by matrix-free CG, warm-started at ``w_t``.
    """
    view = as_view(view)
    ds = view.dataset
    if ds.loss is not LossKind.QUADRATIC:
        raise UnsupportedOperation("exact subproblem solve requires quadratic loss")
    if mu < 0:
        raise DomainError("mu must be >= 0")
    rows, m = view.rows, view.m
    shift = ds.lam + mu

    def matvec(v):
        xv = kernels.row_dots(ds.indptr, ds.indices, ds.data, rows, v)
        return kernels.rows_axpy(ds.indptr, ds.indices, ds.data, rows, xv, ds.dim) / m + shift * v

    rhs = (kernels.rows_axpy(ds.indptr, ds.indices, ds.data, rows, ds.y[rows], ds.dim) / m
           + np.asarray(linear_shift, np.float64) + mu * np.asarray(w_t, np.float64))
    return conjugate_gradient(matvec, rhs, x0=w_t, rtol=rtol, max_iter=10 * ds.dim)


def _check_partition(dataset: Dataset, partition: Partition):
    if partition.n != dataset.n:
        raise DomainError("partition does not match dataset size")


def dane_round(dataset: Dataset, partition: Partition, state: RoundState, cfg: DaneConfig,
               seed: int = 0, workers: int = 1) -> RoundState:
    """DANE: every node minimizes its perturbed local objective; results are averaged uniformly.

    The round costs two vector exchanges (gradient, then local solutions).
    """
    _check_partition(dataset, partition)
    solver = cfg.local_solver
    if isinstance(solver, ExactQuadratic) and dataset.loss is not LossKind.QUADRATIC:
        raise UnsupportedOperation("ExactQuadratic local solver requires quadratic loss")
    w = state.w
    g = full_gradient(dataset, w)

    def local(k):
        view = dataset.view(partition.blocks[k])
        gk = full_gradient(view, w)
        shift = gk - cfg.eta * g
        if isinstance(solver, ExactQuadratic):
            return exact_quadratic_subproblem(view, w, shift, cfg.mu, solver.rtol)
        return _svrg_on_subproblem(view, w, shift, cfg.mu, solver, node_rng(seed, state.round, k))

    w_nodes = map_nodes(local, partition.K, workers)
    return RoundState(ordered_sum(w_nodes) / partition.K, state.round + 1)


def _svrg_on_subproblem(view, w_t, shift, mu, solver: SvrgInner, rng):
    """SVRG on ``G(w) = F_k(w) - shift^T w + mu/2 ||w - w_t||^2``, started at ``w_t``.

    Components are ``f_i(w) - shift^T w + mu/2 ||w - w_t||^2``: their
    differences have curvature ``lam + mu`` in the dense part.
    """
    ds = view.dataset
    ones = np.ones(ds.dim)
    w = np.array(w_t, dtype=np.float64)
    for _ in range(solver.epochs):
        anchor_grad = full_gradient(view, w) - shift + mu * (w - w_t)
        order = sample_indices(rng, view.rows, solver.svrg.m, solver.svrg.sampling)
        w = _pass(ds, order, w, w, anchor_grad, solver.svrg.h, ds.lam + mu, ones)
    return w


def naive_fsvrg_round(dataset: Dataset, partition: Partition, state: RoundState, m: int,
                      h: float, seed: int = 0, workers: int = 1) -> RoundState:
    """Distributed SVRG: m uniform local steps per node, plain average of the updates."""
    _check_partition(dataset, partition)
    if m < 1:
        raise DomainError("m must be >= 1")
    if h < 0:
        raise DomainError("stepsize must be >= 0")
    w = state.w
    g = full_gradient(dataset, w)
    ones = np.ones(dataset.dim)

    def local(k):
        order = sample_indices(node_rng(seed, state.round, k), partition.blocks[k], m)
        return _pass(dataset, order, w, w, g, h, dataset.lam, ones) - w

    deltas = map_nodes(local, partition.K, workers)
    return RoundState(w + ordered_sum(deltas) / partition.K, state.round + 1)


def fsvrg_round(dataset: Dataset, partition: Partition, state: RoundState, cfg: FsvrgConfig,
                seed: int = 0, workers: int = 1) -> RoundState:
    """Federated SVRG round.

    Node k walks a random permutation of its examples with stepsize h/n_k,
    scaling the stochastic gradient difference by S_k; the server adds
    ``A sum_k (n_k/n) (w_k - w)``.
    """
    _check_partition(dataset, partition)
    st = cfg.stats
    if st.dim != dataset.dim or st.K != partition.K or not np.array_equal(st.node_sizes, partition.sizes):
        raise DomainError("sparsity stats do not match the dataset/partition")
    w = state.w
    n = dataset.n
    g = full_gradient(dataset, w)
    ones = np.ones(dataset.dim)

    def local(k):
        rows = partition.blocks[k]
        nk = rows.size
        rng = node_rng(seed, state.round, k)
        order = np.concatenate([rng.permutation(rows) for _ in range(cfg.passes)])
        scale = st.s[k] if cfg.use_scaling else ones
        wk = _pass(dataset, order, w, w, g, cfg.h / nk, dataset.lam, scale)
        return (nk / n) * (wk - w)

    agg = ordered_sum(map_nodes(local, partition.K, workers))
    if cfg.use_scaling:
        agg = st.a * agg
    return RoundState(w + agg, state.round + 1)


# -- cost model -----------------------------------------------------------------

class CostVariant(enum.Enum):
    BASIC = "basic"
    DISTRIBUTED = "distributed"
    FRAMEWORK = "framework"


@dataclass(frozen=True)
class CostModel:
    """Inputs of the time-to-accuracy model.

    For FRAMEWORK, ``iterations`` may be omitted; it is then taken as
    ``log(1/eps) / (1 - theta)``.
    """

    time_per_iter: float
    comm_cost: float = 0.0
    iterations: float | None = None
    theta: float = 0.0
    eps: float | None = None

    def __post_init__(self):
        vals = [self.time_per_iter, self.comm_cost, self.theta]
        if self.iterations is not None:
            vals.append(self.iterations)
        if any(v < 0 for v in vals):
            raise DomainError("cost model fields must be nonnegative")
        if self.theta >= 1:
            raise DomainError("theta must be < 1")


def cost_model_time(model: CostModel, variant) -> float:
    variant = CostVariant(variant)
    if variant is CostVariant.FRAMEWORK:
        iters = model.iterations
        if iters is None:
            if model.eps is None or not 0 < model.eps < 1:
                raise DomainError("framework variant needs iterations or eps in (0, 1)")
            iters = math.log(1.0 / model.eps) / (1.0 - model.theta)
        return iters * (model.comm_cost + model.time_per_iter)
    if model.iterations is None:
        raise DomainError("iterations required")
    if variant is CostVariant.BASIC:
        return model.iterations * model.time_per_iter
    return model.iterations * (model.comm_cost + model.time_per_iter)
