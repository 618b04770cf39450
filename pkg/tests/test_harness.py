from dataclasses import replace

import numpy as np
import pytest

from conftest import dataset_from_dense
from fedopt import (DomainError, ExperimentConfig, NumericalError, Partition, PartitionSpec,
                    RoundState, SearchError, SyntheticSpec, benchmark_spec, default_grid,
                    full_gradient, gd_round, generate_synthetic, grid_search_stepsize,
                    make_partition, objective, oracle_solve, planted_weights, run_experiment,
                    small_benchmark_spec)
from fedopt.io import write_trace


@pytest.fixture(scope="module")
def small():
    train, test = generate_synthetic(small_benchmark_spec(42))
    return train, test, make_partition(train, PartitionSpec("clustered", 8))


@pytest.fixture(scope="module")
def small_ridge():
    spec = replace(small_benchmark_spec(3), label_model="ridge")
    train, _ = generate_synthetic(spec)
    # shuffled, balanced nodes: DANE with mu = 0 is not expected to converge on clustered ones
    return train, make_partition(train, PartitionSpec("power-law", 4, exponent=0.0))


def test_generate_is_deterministic_and_seeded():
    spec = small_benchmark_spec(5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a[0] == b[0] and a[1] == b[1]
    assert generate_synthetic(replace(spec, seed=6))[0] != a[0]


def test_generate_shapes_and_groups():
    spec = SyntheticSpec(n=120, d=40, groups=4, support=6, words=3, min_group=10, max_group=60,
                         seed=1)
    train, test = generate_synthetic(spec)
    assert train.n == 120 and train.dim == 40
    sizes = np.bincount(train.groups, minlength=4)
    assert sizes.min() >= 10 and sizes.max() <= 60
    # test tail is ceil(size/3) per group
    assert np.bincount(test.groups, minlength=4).tolist() == [-(-s // 3) for s in sizes]
    norms = np.sqrt(np.add.reduceat(train.data ** 2, train.indptr[:-1]))
    np.testing.assert_allclose(norms, 1.0, rtol=1e-14)
    assert set(np.unique(train.y)) <= {-1.0, 1.0}


def test_zero_overlap_gives_disjoint_word_supports():
    spec = SyntheticSpec(n=200, d=60, groups=5, support=8, overlap=0.0, words=4, seed=2)
    train, _ = generate_synthetic(spec)
    seen = []
    for g in range(5):
        rows = np.flatnonzero(train.groups == g)
        cols = set()
        for i in rows:
            cols.update(train.indices[train.indptr[i]:train.indptr[i + 1]].tolist())
        seen.append(cols - {0, 1})
    for i in range(5):
        for j in range(i + 1, 5):
            assert not seen[i] & seen[j]


def test_noise_free_ridge_labels_match_planted_weights():
    spec = SyntheticSpec(n=100, d=30, groups=4, support=6, label_model="ridge", lam=0.0, seed=3)
    train, test = generate_synthetic(spec)
    w = planted_weights(spec)
    assert objective(train, w) <= 1e-28
    assert objective(test, w) <= 1e-28


def test_spec_validation():
    with pytest.raises(DomainError):
        SyntheticSpec(n=10, d=5, groups=20)
    with pytest.raises(DomainError):
        SyntheticSpec(n=10, d=5, groups=2, support=4)
    with pytest.raises(DomainError):
        SyntheticSpec(n=10, d=20, groups=2, min_group=1)
    with pytest.raises(DomainError):
        generate_synthetic(SyntheticSpec(n=50, d=12, groups=5, support=4, overlap=0.0))


def test_oracle_one_dimensional_example():
    # f(w) = 1/2 (w - 1)^2 + 1/2 w^2, minimized at 1/2 with value 1/4
    ds = dataset_from_dense([[1.0]], [1.0], "quadratic", 1.0)
    w, f = oracle_solve(ds)
    assert w[0] == pytest.approx(0.5, abs=1e-12)
    assert f == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("loss", ["quadratic", "logistic"])
def test_oracle_is_stationary_and_below_origin(small, loss):
    train = small[0]
    if loss == "quadratic":
        train = generate_synthetic(replace(small_benchmark_spec(42), label_model="ridge"))[0]
    w, f = oracle_solve(train)
    assert np.linalg.norm(full_gradient(train, w)) <= 1e-10
    assert f <= objective(train, np.zeros(train.dim))
    assert f == objective(train, w)


def test_logistic_oracle_needs_regularization(small):
    with pytest.raises(DomainError):
        oracle_solve(small[0].with_lambda(0.0))


def test_zero_rounds_records_only_the_start(small):
    train, test, part = small
    tr = run_experiment(ExperimentConfig(train, "gd", 0, part, test=test))
    assert len(tr.records) == 1
    r = tr.final
    assert r.round == 0 and r.comm_rounds == 0
    assert r.objective == objective(train, np.zeros(train.dim)) == pytest.approx(np.log(2))
    assert r.gap == r.objective - tr.opt
    # a zero margin predicts +1, so every negative test label is an error
    assert r.test_error == np.mean(test.y < 0)


def test_gd_trace_matches_manual_loop(small):
    train, _, part = small
    tr = run_experiment(ExperimentConfig(train, "gd", 5, part, h=0.7, oracle=False))
    state = RoundState(np.zeros(train.dim), 0)
    expect = [objective(train, state.w)]
    for _ in range(5):
        state = gd_round(train, state, 0.7)
        expect.append(objective(train, state.w))
    assert tr.objectives.tolist() == expect
    assert tr.rounds.tolist() == list(range(6))
    assert np.isnan(tr.gaps).all()


def test_eval_every_keeps_last_round(small):
    train, _, part = small
    tr = run_experiment(ExperimentConfig(train, "gd", 7, part, eval_every=3, oracle=False))
    assert tr.rounds.tolist() == [0, 3, 6, 7]


def test_config_validation(small):
    train = small[0]
    with pytest.raises(DomainError):
        ExperimentConfig(train, "sgd", 3)
    with pytest.raises(DomainError):
        ExperimentConfig(train, "gd", -1)
    with pytest.raises(DomainError):
        ExperimentConfig(train, "gd", 1, eval_every=0)


def test_dual_methods_reject_logistic(small):
    with pytest.raises(NumericalError, match="dual methods require quadratic loss"):
        run_experiment(ExperimentConfig(small[0], "dual", 2, small[2]))


def test_divergence_raises_or_marks(small):
    train, _, part = small
    cfg = ExperimentConfig(train.with_loss("quadratic"), "gd", 50, part, h=1e6, oracle=False)
    with np.errstate(all="ignore"):
        with pytest.raises(NumericalError):
            run_experiment(cfg)
        tr = run_experiment(cfg, on_divergence="mark")
    assert tr.diverged and "gd" in tr.message


@pytest.mark.parametrize("algo", ["gd", "svrg", "fsvrg", "fsvrg-naive", "dane", "dual", "primal"])
def test_traces_never_fall_below_optimum(small_ridge, algo):
    train, part = small_ridge
    tr = run_experiment(ExperimentConfig(train, algo, 6, part))
    assert np.all(tr.objectives >= tr.opt - 1e-9)
    assert tr.final.objective < tr.records[0].objective


def test_grid_search_singleton_and_ties(small):
    train, _, part = small
    cfg = ExperimentConfig(train, "gd", 3, part, oracle=False)
    h, tr = grid_search_stepsize(cfg, [0.5])
    assert h == 0.5 and tr.final.objective == run_experiment(replace(cfg, h=0.5)).final.objective
    # with no rounds every stepsize ties; the smallest wins
    h, _ = grid_search_stepsize(replace(cfg, rounds=0), [4.0, 1.0, 2.0])
    assert h == 1.0


def test_grid_search_prefers_convergent_stepsize(small):
    train, _, part = small
    cfg = ExperimentConfig(train.with_loss("quadratic"), "gd", 20, part, oracle=False)
    with np.errstate(all="ignore"):
        h, tr = grid_search_stepsize(cfg, [1.0, 1e3])
        assert h == 1.0 and not tr.diverged
        with pytest.raises(SearchError):
            grid_search_stepsize(cfg, [1e3, 1e4])
    with pytest.raises(SearchError):
        grid_search_stepsize(cfg, [])


def test_grid_search_parallel_matches_serial(small):
    train, _, part = small
    cfg = ExperimentConfig(train, "fsvrg", 4, part, oracle=False)
    grid = default_grid("fsvrg", train, part)[:6]
    a = grid_search_stepsize(cfg, grid)
    b = grid_search_stepsize(cfg, grid, jobs=3)
    assert a[0] == b[0] and a[1].objectives.tolist() == b[1].objectives.tolist()


@pytest.mark.parametrize("algo", ["fsvrg", "fsvrg-naive", "svrg"])
def test_traces_are_byte_identical_across_runs_and_workers(small, algo):
    train, test, part = small
    cfg = ExperimentConfig(train, algo, 5, part, test=test, seed=11)
    first = write_trace(run_experiment(cfg))
    assert write_trace(run_experiment(cfg)) == first
    assert write_trace(run_experiment(replace(cfg, workers=4))) == first


def test_seed_changes_stochastic_traces(small):
    train, _, part = small
    cfg = ExperimentConfig(train, "fsvrg", 3, part, oracle=False)
    assert (run_experiment(cfg).objectives.tolist()
            != run_experiment(replace(cfg, seed=1)).objectives.tolist())


def test_lambda_override(small):
    train, _, part = small
    tr = run_experiment(ExperimentConfig(train, "gd", 1, part, lam=0.5, oracle=False))
    assert tr.records[0].objective == objective(train.with_lambda(0.5), np.zeros(train.dim))


def test_partition_spec_is_resolved(small):
    train, _, part = small
    a = run_experiment(ExperimentConfig(train, "fsvrg", 2, PartitionSpec("clustered", 8),
                                        oracle=False))
    b = run_experiment(ExperimentConfig(train, "fsvrg", 2, part, oracle=False))
    assert a.objectives.tolist() == b.objectives.tolist()


def test_default_grids_bracket_inverse_smoothness(small):
    train, _, part = small
    for algo in ("gd", "fsvrg", "dane"):
        g = np.array(default_grid(algo, train, part))
        assert np.all(np.diff(g) > 0)
        assert g.min() < g.max()
    g = default_grid("gd", train, part)
    assert g[3] / g[0] == pytest.approx(8.0)


@pytest.mark.slow
def test_benchmark_sanity_ordering():
    train, _ = generate_synthetic(benchmark_spec(0))
    part = make_partition(train, PartitionSpec("clustered", 50))
    _, f_star = oracle_solve(train)
    base = ExperimentConfig(train, "fsvrg", 30, part, oracle=False)
    _, fs = grid_search_stepsize(base, default_grid("fsvrg", train, part))
    _, gd = grid_search_stepsize(replace(base, algorithm="gd"), default_grid("gd", train, part))
    naive = run_experiment(replace(base, algorithm="fsvrg-naive"), on_divergence="mark")
    gaps = [t.final.objective - f_star for t in (fs, gd, naive)]
    assert gaps[0] <= gaps[1] <= gaps[2]


@pytest.mark.slow
def test_fsvrg_descends_monotonically_on_ridge_benchmark():
    train, _ = generate_synthetic(replace(benchmark_spec(0), label_model="ridge"))
    part = make_partition(train, PartitionSpec("clustered", 50))
    cfg = ExperimentConfig(train, "fsvrg", 30, part)
    _, tr = grid_search_stepsize(cfg, default_grid("fsvrg", train, part))
    assert np.all(np.diff(tr.objectives) <= 0)
    assert np.all(tr.gaps >= -1e-9)
