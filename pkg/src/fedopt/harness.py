"""Synthetic federated datasets, reference solvers, and experiment traces."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import algorithms as alg
from . import duality
from .errors import DomainError, NumericalError, SearchError
from .linalg import conjugate_gradient
from .model import (Dataset, LossKind, classification_error, full_gradient,
                    hessian_vector, objective)
from .partition import (Partition, PartitionSpec, compute_stats, make_partition,
                        power_law_sizes)

BIAS, UNKNOWN = 0, 1
N_SHARED = 2


@dataclass(frozen=True)
class SyntheticSpec:
    """Clustered sparse data in the shape of per-user bag-of-words posts.

    Coordinate 0 is a bias present in every point and coordinate 1 an
    "unknown word" present in about half of them. Each group owns a support
    of ``support`` word features: a fraction ``overlap`` of it comes from a
    pool of popular words shared by all groups, the rest is private to the
    group (private blocks are disjoint while they fit in ``d``). A point
    carries up to ``words`` features from its group's support; nonzero values
    are 1/sqrt(nnz), so every point has unit norm.

    Group training sizes are balanced when ``min_group`` is None, otherwise
    log-normal with spread ``size_spread``, clipped to [min_group, max_group].
    Each group also gets a test tail of ceil(size/3) points generated after
    its training points (a 75/25 ordered split).
    """

    n: int
    d: int
    groups: int
    support: int = 10
    overlap: float = 0.0
    words: int = 5
    label_model: str = "logistic"
    noise: float = 0.0
    weight_scale: float = 3.0
    min_group: int | None = None
    max_group: int | None = None
    size_spread: float = 1.0
    lam: float | None = None  # default 1/n
    seed: int = 0

    def __post_init__(self):
        if self.label_model not in ("logistic", "ridge"):
            raise DomainError("label_model must be 'logistic' or 'ridge'")
        if not 1 <= self.groups <= self.n:
            raise DomainError("need 1 <= groups <= n")
        if self.support < 1 or self.support > self.d - N_SHARED:
            raise DomainError("support must be in [1, d - 2]")
        if not 0.0 <= self.overlap <= 1.0:
            raise DomainError("overlap must be in [0, 1]")
        if self.words < 1 or self.noise < 0:
            raise DomainError("words must be >= 1 and noise >= 0")
        if (self.min_group is None) != (self.max_group is None):
            raise DomainError("give both min_group and max_group, or neither")
        if self.min_group is not None and not (
                1 <= self.min_group <= self.max_group
                and self.groups * self.min_group <= self.n <= self.groups * self.max_group):
            raise DomainError("group size bounds cannot produce n points")


def _group_sizes(spec: SyntheticSpec, rng) -> np.ndarray:
    if spec.min_group is None:
        return power_law_sizes(spec.n, spec.groups, 0.0)
    lo, hi = spec.min_group, spec.max_group
    raw = np.exp(rng.normal(0.0, spec.size_spread, spec.groups))
    sizes = np.clip(np.round(raw * spec.n / raw.sum()), lo, hi).astype(np.int64)
    # move the rounding/clipping surplus onto groups with slack, largest first
    order = np.argsort(-raw, kind="stable")
    while sizes.sum() != spec.n:
        step = 1 if sizes.sum() < spec.n else -1
        for g in order:
            if sizes.sum() == spec.n:
                break
            if lo <= sizes[g] + step <= hi:
                sizes[g] += step
    return sizes


def _supports(spec: SyntheticSpec, rng) -> list[np.ndarray]:
    n_common = int(round(spec.overlap * spec.support))
    n_private = spec.support - n_common
    pool = np.arange(N_SHARED, N_SHARED + (spec.support if n_common else 0))
    free = np.arange(N_SHARED + pool.size, spec.d)
    if spec.groups * n_private > free.size:
        if n_common == 0:
            raise DomainError("disjoint supports do not fit in d; raise d or overlap")
    if n_private > free.size:
        raise DomainError("private supports do not fit in d")
    out = []
    for g in range(spec.groups):
        start = (g * n_private) % max(free.size - n_private + 1, 1)
        private = free[start:start + n_private]
        common = rng.choice(pool, size=n_common, replace=False) if n_common else pool[:0]
        out.append(np.sort(np.concatenate([common, private])))
    return out


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) pair; both carry group ids."""
    rng = np.random.default_rng(spec.seed)
    sizes = _group_sizes(spec, rng)
    supports = _supports(spec, rng)
    w_true = spec.weight_scale * rng.standard_normal(spec.d)
    loss = LossKind.LOGISTIC if spec.label_model == "logistic" else LossKind.QUADRATIC
    parts = {"train": ([], [], [], []), "test": ([], [], [], [])}
    for g, ng in enumerate(sizes.tolist()):
        supp = supports[g]
        k = min(spec.words, supp.size)
        for r in range(ng + -(-ng // 3)):
            feats = [BIAS]
            if rng.random() < 0.5:
                feats.append(UNKNOWN)
            feats.extend(rng.choice(supp, size=k, replace=False).tolist())
            feats = np.array(sorted(feats), dtype=np.int64)
            vals = np.full(feats.size, 1.0 / math.sqrt(feats.size))
            margin = float(np.dot(vals, w_true[feats]))
            eps = spec.noise * rng.standard_normal()
            if loss is LossKind.LOGISTIC:
                label = 1.0 if margin + eps >= 0.0 else -1.0
            else:
                label = margin + eps
            bucket = parts["train" if r < ng else "test"]
            bucket[0].append(feats)
            bucket[1].append(vals)
            bucket[2].append(label)
            bucket[3].append(g)
    lam = 1.0 / spec.n if spec.lam is None else spec.lam
    out = []
    for key in ("train", "test"):
        idx, vals, y, grp = parts[key]
        indptr = np.concatenate([[0], np.cumsum([a.size for a in idx])])
        out.append(Dataset.from_csr(indptr, np.concatenate(idx), np.concatenate(vals), y,
                                    spec.d, loss, lam, grp, validate=False))
    return out[0], out[1]


def planted_weights(spec: SyntheticSpec) -> np.ndarray:
    """The vector the labels of ``generate_synthetic(spec)`` were drawn from."""
    rng = np.random.default_rng(spec.seed)
    _group_sizes(spec, rng)
    _supports(spec, rng)
    return spec.weight_scale * rng.standard_normal(spec.d)


# -- reference solutions -----------------------------------------------------------

def oracle_solve(dataset: Dataset, gtol: float = 1e-10, max_iter: int = 200):
    """High-accuracy minimizer ``(w*, f*)``.

    Quadratic loss: CG on the normal equations to relative residual 1e-12.
    Logistic loss: damped Newton (CG inner solves, backtracking on the
    objective) until ``||grad f|| <= gtol``.
    """
    view = dataset.view()
    d = dataset.dim
    if dataset.loss is LossKind.QUADRATIC:
        origin = np.zeros(d)
        rhs = -full_gradient(view, origin)  # (1/n) X y
        w = conjugate_gradient(lambda v: hessian_vector(view, origin, v), rhs, rtol=1e-12,
                               max_iter=20 * d)
        gnorm = np.linalg.norm(full_gradient(view, w))
        if gnorm > max(gtol, 1e-12 * max(np.linalg.norm(rhs), 1.0)):
            raise NumericalError(f"oracle: gradient norm {gnorm:.3e} after CG")
        return w, objective(view, w)
    if not dataset.lam > 0:
        raise DomainError("logistic oracle needs lambda > 0")
    w = np.zeros(d)
    f = objective(view, w)
    for _ in range(max_iter):
        g = full_gradient(view, w)
        gnorm = np.linalg.norm(g)
        if gnorm <= gtol:
            return w, f
        step = conjugate_gradient(lambda v: hessian_vector(view, w, v), -g,
                                  rtol=min(0.1, math.sqrt(gnorm)), max_iter=20 * d)
        slope = float(np.dot(g, step))
        t = 1.0
        while True:
            w_new = w + t * step
            f_new = objective(view, w_new)
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if f_new > f and t < 1e-12:
            break
        w, f = w_new, f_new
    gnorm = np.linalg.norm(full_gradient(view, w))
    if gnorm <= gtol:
        return w, objective(view, w)
    raise NumericalError(f"oracle: Newton stalled at gradient norm {gnorm:.3e}")


# -- experiments -----------------------------------------------------------------

ALGORITHMS = ("gd", "svrg", "fsvrg", "fsvrg-naive", "dane", "dual", "primal")


@dataclass(frozen=True)
class TraceRecord:
    round: int
    objective: float
    gap: float
    test_error: float
    comm_rounds: int


@dataclass
class Trace:
    algorithm: str
    records: list[TraceRecord] = field(default_factory=list)
    opt: float | None = None
    opt_test_error: float | None = None
    diverged: bool = False
    message: str = ""
    w: np.ndarray | None = None

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.records])

    @property
    def rounds(self) -> np.ndarray:
        return np.array([r.round for r in self.records])

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]


@dataclass(frozen=True)
class ExperimentConfig:
    """One algorithm run on one partitioned dataset.

    ``h`` is the algorithm's stepsize (GD step, SVRG/naive-FSVRG per-step
    size, FSVRG global h, DANE inner SVRG step); ``None`` picks a default.
    ``m`` is the local step count for svrg / fsvrg-naive / dane-svrg
    (default: the mean node size). ``lam`` overrides the dataset's lambda.
    """

    dataset: Dataset
    algorithm: str
    rounds: int
    partition: Partition | PartitionSpec | None = None
    test: Dataset | None = None
    h: float | None = None
    m: int | None = None
    eta: float = 1.0
    mu: float = 0.0
    local_solver: str = "exact"
    sigma: float | None = None
    use_scaling: bool = True
    passes: int = 1
    lam: float | None = None
    seed: int = 0
    eval_every: int = 1
    w0: np.ndarray | None = None
    oracle: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise DomainError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.rounds < 0:
            raise DomainError("rounds must be >= 0")
        if self.eval_every < 1:
            raise DomainError("eval_every must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise DomainError("lambda must be >= 0")


def resolve_problem(config: ExperimentConfig) -> tuple[Dataset, Dataset | None, Partition]:
    ds = config.dataset if config.lam is None else config.dataset.with_lambda(config.lam)
    test = config.test
    part = config.partition
    if part is None:
        part = Partition([np.arange(ds.n)], ds.n)
    elif isinstance(part, PartitionSpec):
        part = make_partition(ds, part)
    return ds, test, part


def default_stepsize(config: ExperimentConfig, ds: Dataset, part: Partition) -> float:
    L = alg.smoothness_estimate(ds)
    if config.algorithm == "fsvrg":
        return 1.0 / L
    if config.algorithm in ("svrg", "fsvrg-naive", "dane"):
        return 0.2 / L
    return 1.0 / L


def run_experiment(config: ExperimentConfig, on_divergence: str = "raise") -> Trace:
    """Execute the configured algorithm round by round and record its trace.

    Records are taken at round 0, every ``eval_every`` rounds, and at the last
    round. A non-finite objective raises ``NumericalError`` (or, with
    ``on_divergence="mark"``, ends the run marked as diverged; that mode also
    stops runs whose objective exceeds 1e3 times the initial value).
    """
    ds, test, part = resolve_problem(config)
    algo = config.algorithm
    if algo in ("dual", "primal"):
        if ds.loss is not LossKind.QUADRATIC:
            raise NumericalError("dual methods require quadratic loss")
    if algo == "dane" and config.local_solver == "exact" and ds.loss is not LossKind.QUADRATIC:
        raise NumericalError("DANE's exact local solver requires quadratic loss")

    trace = Trace(algo)
    if config.oracle:
        w_star, f_star = oracle_solve(ds)
        trace.opt = f_star
        if test is not None and test.loss is LossKind.LOGISTIC:
            trace.opt_test_error = classification_error(test, w_star)

    h = config.h if config.h is not None else default_stepsize(config, ds, part)
    m = config.m if config.m is not None else max(1, int(round(ds.n / part.K)))
    w0 = np.zeros(ds.dim) if config.w0 is None else np.asarray(config.w0, np.float64)
    step = _stepper(config, ds, part, h, m, w0)
    w = step.w

    def record(t, w):
        f = objective(ds, w)
        gap = f - trace.opt if trace.opt is not None else math.nan
        err = (classification_error(test, w)
               if test is not None and test.loss is LossKind.LOGISTIC else math.nan)
        trace.records.append(TraceRecord(t, f, gap, err, t))
        return f

    f0 = record(0, w)
    ceiling = 1e3 * max(abs(f0), 1e-300)
    for t in range(1, config.rounds + 1):
        w = step()
        last = t == config.rounds
        if t % config.eval_every and not last:
            if np.all(np.isfinite(w)):
                continue
        f = record(t, w)
        if not math.isfinite(f):
            msg = f"{algo}: non-finite objective at round {t} (h={h!r})"
            if on_divergence == "raise":
                raise NumericalError(msg)
            trace.diverged, trace.message = True, msg
            break
        if on_divergence == "mark" and f > ceiling:
            trace.diverged = True
            trace.message = f"{algo}: objective {f:.3e} exceeds 1e3 x initial at round {t} (h={h!r})"
            break
    trace.w = w
    return trace


class _stepper:
    """Holds algorithm state; each call advances one round and returns the primal iterate."""

    def __init__(self, config, ds, part, h, m, w0):
        self.cfg, self.ds, self.part, self.h, self.m = config, ds, part, h, m
        algo = config.algorithm
        seed, workers = config.seed, config.workers
        if algo == "dual" or algo == "primal":
            sigma = config.sigma if config.sigma is not None else float(part.K)
            self.dcfg = duality.DualConfig(sigma)
            if config.w0 is not None and np.any(w0):
                raise DomainError("dual/primal methods start from alpha = 0 (w0 = 0)")
            if algo == "dual":
                self.state = duality.DualState.zeros(part)
            else:
                self.state = duality.primal_method_init(ds, part, np.zeros(ds.n), self.dcfg)
            self.w = np.zeros(ds.dim)
            return
        self.state = alg.RoundState(w0, 0)
        self.w = self.state.w
        if algo == "fsvrg":
            self.fcfg = alg.FsvrgConfig(h, compute_stats(ds, part), config.use_scaling, config.passes)
        elif algo == "dane":
            if config.local_solver == "exact":
                solver = alg.ExactQuadratic()
            elif config.local_solver == "svrg":
                solver = alg.SvrgInner(alg.SvrgConfig(m, h))
            else:
                raise DomainError(f"unknown DANE local solver {config.local_solver!r}")
            self.dane = alg.DaneConfig(config.eta, config.mu, solver)
        elif algo == "svrg":
            self.scfg = alg.SvrgConfig(m, h)

    def __call__(self):
        c, ds, part = self.cfg, self.ds, self.part
        algo = c.algorithm
        if algo == "gd":
            self.state = alg.gd_round(ds, self.state, self.h)
        elif algo == "svrg":
            self.state = alg.svrg_run(ds, self.state.w, self.scfg, 1, c.seed, self.state.round)
        elif algo == "fsvrg":
            self.state = alg.fsvrg_round(ds, part, self.state, self.fcfg, c.seed, c.workers)
        elif algo == "fsvrg-naive":
            self.state = alg.naive_fsvrg_round(ds, part, self.state, self.m, self.h, c.seed, c.workers)
        elif algo == "dane":
            self.state = alg.dane_round(ds, part, self.state, self.dane, c.seed, c.workers)
        elif algo == "dual":
            self.state = duality.dual_method_round(ds, part, self.state, self.dcfg, c.workers)
            return duality.primal_from_dual(ds, self.state.flat(part))
        else:
            self.state = duality.primal_method_round(ds, part, self.state, self.dcfg, c.workers)
        return self.state.w


def grid_search_stepsize(config: ExperimentConfig, grid, jobs: int = 1) -> tuple[float, Trace]:
    """Run once per stepsize; keep the lowest final objective (ties go to the smaller h).

    Diverged runs are discarded; if all diverge, ``SearchError`` is raised.
    """
    grid = sorted(float(h) for h in grid)
    if not grid:
        raise SearchError("empty stepsize grid")

    def run(h):
        try:
            return run_experiment(replace(config, h=h), on_divergence="mark")
        except (NumericalError, FloatingPointError) as exc:
            return Trace(config.algorithm, diverged=True, message=str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(run, grid))
    else:
        traces = [run(h) for h in grid]
    best = None
    for h, tr in zip(grid, traces):
        if tr.diverged or not tr.records or not math.isfinite(tr.final.objective):
            continue
        if best is None or tr.final.objective < best[1].final.objective:
            best = (h, tr)
    if best is None:
        raise SearchError(f"all {len(grid)} stepsizes diverged for {config.algorithm}")
    return best


def default_grid(algorithm: str, dataset: Dataset, partition: Partition | None = None) -> list[float]:
    """Geometric grids around 1/L, the natural scale of each algorithm's stepsize.

    FSVRG gets a finer (half-power-of-two) and wider grid: its usable h spans
    from about 1/L on clustered data to hundreds of 1/L on shuffled data.
    """
    L = alg.smoothness_estimate(dataset)
    if algorithm == "fsvrg":
        return [2.0 ** (k / 2) / L for k in range(-8, 11)]
    if algorithm == "gd":
        return [2.0 ** k / L for k in range(-3, 2)]
    return [2.0 ** k / L for k in range(-6, 2)]


def benchmark_spec(seed: int = 0) -> SyntheticSpec:
    """Desk-scale clustered sparse logistic benchmark (n=5000, d=500, 50 groups of 20..400)."""
    return SyntheticSpec(n=5000, d=500, groups=50, support=30, overlap=0.5, words=3,
                         label_model="logistic", noise=0.5, weight_scale=3.0, min_group=20,
                         max_group=400, size_spread=0.8, seed=seed)


def small_benchmark_spec(seed: int = 42) -> SyntheticSpec:
    """Small clustered instance used by the CLI's default ``compare`` run."""
    return SyntheticSpec(n=400, d=60, groups=8, support=8, overlap=0.5, words=4,
                         label_model="logistic", noise=0.5, min_group=10, max_group=120,
                         seed=seed)
