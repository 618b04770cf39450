import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import dataset_from_dense
from fedopt import (DomainError, DualConfig, DualState, Partition, UnsupportedOperation,
                    check_equivalence, dual_method_round, dual_objective, duality_gap,
                    estimate_sigma, objective, oracle_solve, primal_from_dual, primal_method_init,
                    primal_method_round)


def _ridge(seed, n=40, d=8, K=4, lam=0.1):
    rng = np.random.default_rng(seed)
    X, y = oracles.random_dense(rng, n, d, density=0.6)
    ds = dataset_from_dense(X, y, "quadratic", lam)
    part = Partition(np.split(rng.permutation(n), K), n)
    return X, y, ds, part


def _dense_dual_round(X, y, lam, blocks, alpha, sigma):
    """Minimize each D_k^t(u) from its gradient condition, solved densely."""
    n = X.shape[0]
    w = X.T @ alpha / (lam * n)
    new = alpha.copy()
    for b in blocks:
        Xk = X[b]
        # (1/lam n^2) X_k^T X a + (sigma/lam n^2) X_k^T X_k u + (1/n)(a_k + u - y_k) = 0
        M = sigma / (lam * n * n) * Xk @ Xk.T + np.eye(len(b)) / n
        rhs = (y[b] - alpha[b]) / n - Xk @ w / n
        new[b] = alpha[b] + np.linalg.solve(M, rhs)
    return new


def _dense_primal_run(X, y, lam, blocks, alpha0, sigma, rounds):
    n, d = X.shape
    K = len(blocks)
    eta = K / sigma
    mu = lam * (eta - 1)
    w = X.T @ alpha0 / (lam * n)
    g = [eta * (K / n * X[b].T @ alpha0[b] - lam * w) for b in blocks]
    ws = [w]
    for _ in range(rounds):
        locals_ = []
        for k, b in enumerate(blocks):
            Xk, yk, nk = X[b], y[b], len(b)
            grad_k = Xk.T @ (Xk @ w - yk) / nk + lam * w
            a = grad_k - (eta * grad_k + g[k])
            M = Xk.T @ Xk / nk + (lam + mu) * np.eye(d)
            locals_.append(np.linalg.solve(M, Xk.T @ yk / nk + a + mu * w))
        w = sum(locals_) / K
        g = [g[k] + lam * eta * (locals_[k] - w) for k in range(K)]
        ws.append(w)
    return ws, g


def test_dual_objective_at_zero_and_one_point():
    _, _, ds, part = _ridge(0)
    assert dual_objective(ds, part, np.zeros(40)) == 0.0
    one = dataset_from_dense([[1.0]], [1.0], "quadratic", 1.0)
    single = Partition([[0]], 1)
    assert dual_objective(one, single, np.array([1.0])) == 0.0
    # 1x1 system (1/lam n^2) x^2 a + a/n = y/n gives a* = 1/2
    assert dual_objective(one, single, np.array([0.5])) == pytest.approx(-0.25, abs=1e-15)
    assert dual_objective(one, single, np.array([0.5])) < dual_objective(one, single, np.array([0.6]))


def test_dual_objective_matches_dense_formula(rng):
    X, y, ds, part = _ridge(1)
    alpha = rng.standard_normal(40)
    assert dual_objective(ds, part, alpha) == pytest.approx(oracles.dual_value(X, y, 0.1, alpha), rel=1e-12)
    assert dual_objective(ds, part, DualState.from_flat(alpha, part)) == dual_objective(ds, part, alpha)


def test_strong_duality_at_optimum():
    X, y, ds, part = _ridge(2)
    w_star, f_star = oracle_solve(ds)
    alpha_star = oracles.dual_min(X, y, 0.1)
    assert abs(duality_gap(ds, w_star, alpha_star)) <= 1e-8
    assert np.max(np.abs(primal_from_dual(ds, alpha_star) - w_star)) <= 1e-8
    # alpha*_i = y_i - x_i^T w*
    np.testing.assert_allclose(alpha_star, y - X @ w_star, atol=1e-8)


def test_primal_from_dual_examples():
    _, _, ds, _ = _ridge(3)
    assert np.array_equal(primal_from_dual(ds, np.zeros(40)), np.zeros(8))
    e1 = dataset_from_dense([[1.0, 0.0, 0.0]], [0.0], "quadratic", 0.25)
    assert primal_from_dual(e1, np.array([0.25])).tolist() == [1.0, 0.0, 0.0]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_primal_from_dual_is_linear(seed):
    _, _, ds, _ = _ridge(seed % 7)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(40), rng.standard_normal(40)
    lhs = primal_from_dual(ds, a + b)
    np.testing.assert_allclose(lhs, primal_from_dual(ds, a) + primal_from_dual(ds, b), rtol=0,
                               atol=1e-12 * max(1.0, np.abs(lhs).max()))


def test_duality_gap_at_zero_is_primal_value():
    _, _, ds, _ = _ridge(4)
    assert duality_gap(ds, np.zeros(8), np.zeros(40)) == objective(ds, np.zeros(8)) >= 0


def test_weak_duality_over_100_seeds():
    worst = np.inf
    for seed in range(100):
        X, y, ds, _ = _ridge(seed % 10)
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(8) * rng.choice([0.01, 1, 10])
        alpha = rng.standard_normal(40) * rng.choice([0.01, 1, 10])
        worst = min(worst, duality_gap(ds, w, alpha))
    assert worst >= -1e-12


def test_dual_round_matches_dense_oracle(rng):
    X, y, ds, part = _ridge(5)
    alpha = rng.standard_normal(40)
    for sigma in (1.0, 2.5, 4.0):
        out = dual_method_round(ds, part, DualState.from_flat(alpha, part), DualConfig(sigma))
        ref = _dense_dual_round(X, y, 0.1, part.blocks, alpha, sigma)
        np.testing.assert_allclose(out.flat(part), ref, rtol=1e-9, atol=1e-10)
        assert out.round == 1


def test_dual_round_at_optimum_does_not_move():
    X, y, ds, part = _ridge(6)
    alpha_star = oracles.dual_min(X, y, 0.1)
    out = dual_method_round(ds, part, DualState.from_flat(alpha_star, part), DualConfig(4.0))
    assert np.linalg.norm(out.flat(part) - alpha_star) <= 1e-8


def test_dual_descent_is_monotone_with_sigma_k():
    _, _, ds, part = _ridge(7)
    state = DualState.zeros(part)
    prev = dual_objective(ds, part, state)
    for _ in range(25):
        state = dual_method_round(ds, part, state, DualConfig(4.0))
        cur = dual_objective(ds, part, state)
        assert cur <= prev + 1e-12
        prev = cur


def test_dual_single_block_is_exact():
    X, y, ds, _ = _ridge(8)
    part = Partition([np.arange(40)], 40)
    out = dual_method_round(ds, part, DualState.zeros(part), DualConfig(1.0))
    np.testing.assert_allclose(out.flat(part), oracles.dual_min(X, y, 0.1), atol=1e-8)


def test_primal_method_g_sums_to_zero():
    _, _, ds, part = _ridge(9)
    alpha0 = np.random.default_rng(9).standard_normal(40)
    cfg = DualConfig(4.0)
    state = primal_method_init(ds, part, alpha0, cfg)
    assert np.linalg.norm(state.g.sum(axis=0)) <= 1e-10
    for _ in range(20):
        state = primal_method_round(ds, part, state, cfg)
        assert np.linalg.norm(state.g.sum(axis=0)) <= 1e-10


def test_primal_method_matches_hand_run_two_nodes():
    X, y, ds, part = _ridge(10, n=6, d=2, K=2, lam=0.3)
    alpha0 = np.zeros(6)
    cfg = DualConfig(2.0)
    ref_ws, ref_g = _dense_primal_run(X, y, 0.3, part.blocks, alpha0, 2.0, 3)
    state = primal_method_init(ds, part, alpha0, cfg)
    for t in range(1, 4):
        state = primal_method_round(ds, part, state, cfg)
        np.testing.assert_allclose(state.w, ref_ws[t], rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(state.g, np.array(ref_g), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("sigma", [1.0, 2.0, 4.0])
def test_primal_and_dual_iterates_coincide(sigma):
    _, _, ds, part = _ridge(11)
    assert check_equivalence(ds, part, np.zeros(40), sigma, 10) <= 1e-8
    alpha0 = np.random.default_rng(3).standard_normal(40)
    assert check_equivalence(ds, part, alpha0, sigma, 10) <= 1e-8


def test_equivalence_with_no_rounds_is_exact():
    _, _, ds, part = _ridge(12)
    assert check_equivalence(ds, part, np.zeros(40), 4.0, 0) == 0.0
    alpha0 = np.random.default_rng(1).standard_normal(40)
    assert check_equivalence(ds, part, alpha0, 4.0, 0) == 0.0


def test_dual_methods_guard_their_domain():
    X, y, ds, part = _ridge(13)
    logistic = dataset_from_dense(X, np.where(y >= 0, 1.0, -1.0), "logistic", 0.1)
    with pytest.raises(UnsupportedOperation, match="dual methods require quadratic loss"):
        dual_method_round(logistic, part, DualState.zeros(part), DualConfig(4.0))
    lopsided = Partition([np.arange(10), np.arange(10, 40)], 40)
    with pytest.raises(DomainError, match="balanced"):
        dual_method_round(ds, lopsided, DualState.zeros(lopsided), DualConfig(2.0))
    with pytest.raises(DomainError):
        dual_method_round(ds, part, DualState.zeros(part), DualConfig(5.0))
    with pytest.raises(DomainError):
        primal_from_dual(ds.with_lambda(0.0), np.zeros(40))


def test_estimate_sigma_is_valid_and_tight():
    X, _, ds, part = _ridge(14, n=40, d=8, K=4)
    sigma = estimate_sigma(ds, part)
    assert 1.0 - 1e-9 <= sigma <= 4.0 + 1e-9
    # X^T X <= sigma B in the dual (n x n) picture, and sigma is the smallest such value
    G = X @ X.T
    B = np.zeros_like(G)
    for b in part.blocks:
        B[np.ix_(b, b)] = G[np.ix_(b, b)]
    lo = np.linalg.eigvalsh(sigma * B - G + 1e-9 * np.eye(40))[0]
    assert lo >= -1e-8
    assert np.linalg.eigvalsh((sigma - 1e-3) * B - G)[0] < 0
