import warnings
from dataclasses import replace

import cvxpy as cp
import numpy as np
import pytest

from oracles import dense_synthesis, l1inf_oracle, solve, stripe_selector
from stripecsc import ConvergenceWarning, InvalidArgumentError
from stripecsc.core import analyze, build_dct_dictionary, extract_stripes, scatter_stripes
from stripecsc.l1inf import (AdmmConfig, AdmmState, admm_gamma_update, admm_split_update,
                             l1inf_objective, solve_l1inf)

ACCURATE = AdmmConfig(max_iter=2000, tol_primal=1e-7, tol_dual=1e-7, cg_tol=1e-10)


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return fn(*args, **kwargs)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        AdmmConfig(rho=0)
    with pytest.raises(InvalidArgumentError):
        AdmmConfig(readout="nope")


def test_zero_signal(dct24):
    assert not np.any(solve_l1inf(np.zeros((4, 4)), dct24, 0.1))
    with pytest.raises(InvalidArgumentError):
        solve_l1inf(np.ones((4, 4)), dct24, 0.0)


def test_gamma_update_zero(dct24):
    state = AdmmState.zeros((6, 6), dct24, 1.0)
    assert not np.any(admm_gamma_update(state, np.zeros((6, 6)), dct24))


def test_gamma_update_large_rho_limit(rng, dct24):
    code0 = rng.standard_normal((6, 6, 4))
    state = AdmmState.zeros((6, 6), dct24, 1e6)
    state.gammas = extract_stripes(code0, 2)
    out = admm_gamma_update(state, rng.standard_normal((6, 6)), dct24,
                            AdmmConfig(rho=1e6, cg_tol=1e-12))
    assert np.linalg.norm(out - code0) <= 1e-3 * np.linalg.norm(code0)


def test_gamma_update_matches_dense_solve(rng, dct24):
    H = W = 8
    state = AdmmState.zeros((H, W), dct24, 0.7)
    state.gammas = rng.standard_normal(state.gammas.shape)
    state.duals = rng.standard_normal(state.duals.shape)
    Y = rng.standard_normal((H, W))
    out = admm_gamma_update(state, Y, dct24, AdmmConfig(rho=0.7, cg_tol=1e-12, cg_max_iter=500))
    M = dense_synthesis(dct24, H, W)
    A = M.T @ M + 0.7 * 9 * np.eye(M.shape[1])
    b = M.T @ Y.ravel() + 0.7 * scatter_stripes(state.gammas + state.duals, 2).ravel()
    x = np.linalg.solve(A, b)
    assert np.linalg.norm(out.ravel() - x) <= 1e-6 * np.linalg.norm(x)


def test_split_update_lambda_zero_keeps_stripes(rng, dct24):
    state = AdmmState.zeros((5, 5), dct24, 1.0)
    code = rng.standard_normal((5, 5, 4))
    state.duals = rng.standard_normal(state.duals.shape)
    out = admm_split_update(state, code, 0.0, dct24)
    np.testing.assert_allclose(out, extract_stripes(code, 2) - state.duals, atol=1e-12)


def test_split_update_huge_lambda_zeroes(rng, dct24):
    state = AdmmState.zeros((5, 5), dct24, 1.0)
    out = admm_split_update(state, rng.standard_normal((5, 5, 4)), 1e9, dct24)
    assert not np.any(out)


def test_split_update_single_location_matches_dense():
    D = build_dct_dictionary(1, 4)
    rng = np.random.default_rng(7)
    state = AdmmState.zeros((1, 1), D, 1.3)
    state.duals = rng.standard_normal(state.duals.shape)
    code = rng.standard_normal((1, 1, 4)) * 2
    lam = 0.8
    out = admm_split_update(state, code, lam, D, AdmmConfig(rho=1.3, radius_tol=1e-12))
    v = (code.ravel() - state.duals.ravel())
    gamma, t = cp.Variable(4), cp.Variable()
    solve(cp.Problem(cp.Minimize(lam * t + 0.65 * cp.sum_squares(gamma - v)),
                     [cp.norm1(gamma) <= t]))
    np.testing.assert_allclose(out.ravel(), gamma.value, atol=1e-5)


def test_matches_dense_oracle(rng, dct24):
    Y = rng.standard_normal((8, 8))
    lam = 1.0
    ref, _ = l1inf_oracle(Y, dct24, lam)
    code = quiet(solve_l1inf, Y, dct24, lam, ACCURATE)
    assert abs(l1inf_objective(Y, dct24, code, lam) - ref) <= 1e-3 * ref


def test_above_critical_lambda_gives_zero(rng, dct24):
    Y = rng.standard_normal((6, 6))
    z = analyze(dct24, Y).ravel()
    g = cp.Variable(z.size)
    cons = [cp.norm1(stripe_selector(6, 6, 4, 2, (r, c)) @ g) <= 1
            for r in range(6) for c in range(6)]
    critical = solve(cp.Problem(cp.Maximize(z @ g), cons))  # dual norm of D^T Y
    cfg = AdmmConfig(max_iter=2000, tol_primal=1e-9, tol_dual=1e-9, cg_tol=1e-12)
    assert np.abs(quiet(solve_l1inf, Y, dct24, 1.05 * critical, cfg)).max() <= 1e-6
    assert np.abs(quiet(solve_l1inf, Y, dct24, 0.9 * critical, cfg)).max() > 1e-3


def test_trace_and_residual_contract(rng, dct24):
    Y = rng.standard_normal((6, 6))
    trace = []
    state = AdmmState.zeros(Y.shape, dct24, 1.0)
    cfg = AdmmConfig(max_iter=2000, tol_primal=1e-4, tol_dual=1e-4)
    code = solve_l1inf(Y, dct24, 0.5, cfg, trace=trace, state=state)
    assert len(trace) == state.iteration and all(np.isfinite(r.objective) for r in trace)
    gap = np.sqrt(((extract_stripes(code, 2) - state.gammas) ** 2).sum(axis=(2, 3))).max()
    assert gap <= cfg.tol_primal * (1 + np.linalg.norm(code))


def test_nonconvergence_warns(rng, dct24):
    with pytest.warns(ConvergenceWarning):
        solve_l1inf(rng.standard_normal((6, 6)), dct24, 0.1, AdmmConfig(max_iter=2))


def test_split_readout_is_sparse_and_close(rng, dct24):
    Y = rng.standard_normal((6, 6))
    lam = 2.0
    state = AdmmState.zeros(Y.shape, dct24, 1.0)
    dense = quiet(solve_l1inf, Y, dct24, lam, ACCURATE, state=state)
    split = state.split_code()
    assert np.any(split == 0)
    np.testing.assert_allclose(split, dense, atol=1e-4)
    again = quiet(solve_l1inf, Y, dct24, lam, replace(ACCURATE, readout="split"))
    np.testing.assert_array_equal(again, split)
