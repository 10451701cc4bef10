import warnings
from dataclasses import replace

import numpy as np
import pytest

from helpers import assert_feasible
from oracles import dense_stripe_dictionary, prox_oracle
from stripecsc import ConstraintInfeasible, ConvergenceWarning, InvalidArgumentError
from stripecsc import l2inf
from stripecsc.core import (LocalDictionary, StripeDictionary, build_dct_dictionary,
                            extract_patches, extract_stripe, synthesize)
from stripecsc.l2inf import (ConstraintSpec, PatchProx, PpxaConfig, PpxaState, ppxa_step,
                             prox_patch_constraint, prox_scale, reconstruct_denoise,
                             restore_feasibility, solve_l2inf)
from stripecsc.prox import shrink


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return fn(*args, **kwargs)


def prox_objective(code, code_in, c):
    return c * np.abs(code).sum() + 0.5 * ((code - code_in) ** 2).sum()


# -- configuration ---------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(relaxation=2.0), dict(relaxation=0.0), dict(mu=0.0),
                                    dict(theta=1.5), dict(inner_method="cg"),
                                    dict(readout="median"), dict(feas_tol=0.0),
                                    dict(growth=1.0)])
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        PpxaConfig(**kwargs)


def test_constraint_spec_validation():
    with pytest.raises(InvalidArgumentError):
        ConstraintSpec(-np.ones((3, 3)))
    with pytest.raises(InvalidArgumentError):
        ConstraintSpec(np.ones((3, 3)), mask=np.full((3, 3), 0.5))
    spec = ConstraintSpec.from_noise((4, 4), 2, 3.0, C=2.0)
    np.testing.assert_array_equal(spec.thresholds, 2.0 * 4 * 9.0)


def test_image_too_small(dct24):
    with pytest.raises(InvalidArgumentError):
        solve_l2inf(np.ones((2, 2)), dct24, ConstraintSpec.uniform((2, 2), 1.0))


# -- per-patch prox ----------------------------------------------------------------------

def test_prox_lambda_zero_branch(rng, dct24):
    Y = rng.standard_normal((5, 5))
    code_in = rng.standard_normal((5, 5, 4))
    cfg = PpxaConfig(mu=0.01)
    out = prox_patch_constraint(code_in, (2, 1), Y, dct24, 1e6, cfg=cfg)
    np.testing.assert_array_equal(out, shrink(code_in, 25 * 0.01))


def test_prox_zero_is_feasible(rng, dct24):
    Y = rng.standard_normal((5, 5))
    T = float((extract_patches(Y, 2)[3, 3] ** 2).sum())
    out = prox_patch_constraint(np.zeros((5, 5, 4)), (3, 3), Y, dct24, T)
    assert not np.any(out)


@pytest.mark.parametrize("theta,masked", [(0.0, False), (0.5, False), (0.3, True)])
def test_prox_matches_dense_oracle(rng, dct24, theta, masked):
    Y = rng.standard_normal((4, 4)) * 3
    code_in = rng.standard_normal((4, 4, 4))
    mask = (rng.random((4, 4)) > 0.3).astype(float) if masked else None
    loc = (1, 2)
    cfg = PpxaConfig(mu=0.02, theta=theta, feas_tol=1e-9, bisection_tol=1e-10)
    c = 16 * 0.02
    T = 0.5
    out = prox_patch_constraint(code_in, loc, Y * (1 if mask is None else mask), dct24, T,
                                mask=mask, cfg=cfg)
    ref = prox_oracle(code_in, loc, Y, dct24, T, c, theta, mask)
    f_out, f_ref = prox_objective(out, code_in, c), prox_objective(ref, code_in, c)
    assert abs(f_out - f_ref) <= 1e-4 * abs(f_ref)
    M = np.ones((4, 4)) if mask is None else mask
    w = extract_patches(M, 2)[loc]
    omega = dense_stripe_dictionary(dct24, theta)
    err = ((w * (omega @ extract_stripe(out, loc, 2) - extract_patches(Y, 2)[loc])) ** 2).sum()
    assert err <= T * (1 + 1e-8)


def test_prox_fista_inner_agrees_with_newton(rng, dct24):
    Y = rng.standard_normal((5, 5)) * 3
    code_in = rng.standard_normal((5, 5, 4))
    base = PpxaConfig(mu=0.02, feas_tol=1e-9)
    a = prox_patch_constraint(code_in, (0, 4), Y, dct24, 0.5, cfg=base)
    b = prox_patch_constraint(code_in, (0, 4), Y, dct24, 0.5,
                              cfg=replace(base, inner_method="fista"))
    fa = prox_objective(a, code_in, 25 * 0.02)
    fb = prox_objective(b, code_in, 25 * 0.02)
    assert abs(fa - fb) <= 1e-5 * fa


def test_prox_infeasible_reports_location(dct24):
    D = LocalDictionary(dct24.atoms[:1])
    Y = np.random.default_rng(0).standard_normal((5, 5))
    with pytest.raises(ConstraintInfeasible) as err:
        prox_patch_constraint(np.zeros((5, 5, 1)), (2, 3), Y, D, 0.0, cfg=PpxaConfig(theta=1.0))
    assert tuple(err.value.location) == (2, 3)


def test_lagrangian_violation_monotone_in_multiplier(rng, dct24):
    Y = rng.standard_normal((6, 6)) * 2
    spec = ConstraintSpec.uniform(Y.shape, 0.1)
    prox = PatchProx(Y, dct24, spec, PpxaConfig())
    g = rng.standard_normal((3, prox.A.shape[1]))
    idx = np.array([0, 7, 20])
    previous = None
    for lam in np.geomspace(1e-3, 1e3, 20):
        z = prox.lagrangian_solve(g, idx, np.full(3, lam), shrink(g, prox.c))
        viol = prox.violation(z, idx)
        if previous is not None:
            assert np.all(viol <= previous + 1e-9 * np.maximum(1.0, np.abs(previous)))
        previous = viol


def test_warm_hints_give_same_prox(rng, dct24):
    Y = rng.standard_normal((6, 6)) * 2
    prox = PatchProx(Y, dct24, ConstraintSpec.uniform(Y.shape, 0.2), PpxaConfig())
    g = rng.standard_normal((36, prox.A.shape[1]))
    cold, lam = prox(g)
    g2 = g + 0.01 * rng.standard_normal(g.shape)
    warm, _ = prox(g2, lam_hint=lam, z_hint=cold)
    ref, _ = prox(g2)
    c = prox.c
    f = lambda z, a: np.abs(z).sum(axis=1) + ((z - a) ** 2).sum(axis=1) / (2 * c)
    np.testing.assert_allclose(f(warm, g2), f(ref, g2), rtol=1e-5)
    assert np.all(prox.feasible(warm, np.arange(36)))


def test_prox_scale():
    Y = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert prox_scale(Y, factor=1.0) == pytest.approx(2.5)
    observed = np.array([[1, 1], [0, 0]])
    assert prox_scale(Y, mask=observed, factor=1.0) == pytest.approx(np.sqrt(12.5))
    assert prox_scale(np.zeros((2, 2)), factor=0.5) == 0.5


# -- PPXA ------------------------------------------------------------------------------

def test_loose_thresholds_give_zero(rng, dct24):
    Y = rng.standard_normal((6, 6))
    T = (extract_patches(Y, 2) ** 2).sum(axis=-1) + 1e-9
    code = solve_l2inf(Y, dct24, ConstraintSpec(T))
    assert np.abs(code).max() <= 1e-8


def test_ppxa_averaging_identities(rng, dct24):
    Y = rng.standard_normal((5, 5)) * 2
    spec = ConstraintSpec.uniform(Y.shape, 0.3)
    cfg = PpxaConfig()
    prox = PatchProx(Y, dct24, spec, cfg)
    state = PpxaState.zeros(prox, 4)
    for _ in range(3):
        ppxa_step(state, prox)
    before = state.code.copy()
    terms = [prox_patch_constraint(state.auxiliary(i, 2), divmod(i, 5), Y, dct24, 0.3, cfg=cfg)
             for i in range(25)]
    agg = ppxa_step(state, prox)
    np.testing.assert_allclose(state.code, before + cfg.relaxation * (agg - before),
                               rtol=0, atol=1e-15 * max(1.0, np.abs(agg).max()))
    np.testing.assert_allclose(agg, np.mean(terms, axis=0), atol=1e-6 * np.abs(agg).max())


def test_solution_is_feasible_and_warns_when_unconverged(rng, dct24):
    Y = rng.standard_normal((6, 6)) * 2
    spec = ConstraintSpec.uniform(Y.shape, 0.3)
    cfg = PpxaConfig(max_outer=20)
    with pytest.warns(ConvergenceWarning):
        code = solve_l2inf(Y, dct24, spec, cfg)
    assert_feasible(Y, code, dct24, spec.thresholds, feas_tol=cfg.feas_tol)


@pytest.mark.parametrize("readout", ["average", "sparse"])
def test_readouts_are_feasible(rng, dct24, readout):
    Y = rng.standard_normal((6, 6)) * 2
    spec = ConstraintSpec.uniform(Y.shape, 0.5)
    cfg = PpxaConfig(max_outer=200, theta=0.4, readout=readout)
    code = quiet(solve_l2inf, Y, dct24, spec, cfg)
    assert_feasible(Y, code, dct24, spec.thresholds, theta=0.4, feas_tol=cfg.feas_tol)
    if readout == "sparse":
        assert np.any(code == 0)


def test_trace_records_every_iteration(rng, dct24):
    trace = []
    quiet(solve_l2inf, rng.standard_normal((5, 5)), dct24, ConstraintSpec.uniform((5, 5), 0.2),
          PpxaConfig(max_outer=15), trace=trace)
    assert [r.iter for r in trace] == list(range(1, 16))
    assert all(r.primal_residual >= 0 for r in trace)


def test_theta_zero_matches_independent_stripe_dictionary(rng, dct24, monkeypatch):
    Y = rng.standard_normal((5, 5)) * 2
    spec = ConstraintSpec.uniform(Y.shape, 0.3)
    cfg = PpxaConfig(max_outer=30)
    plain = quiet(solve_l2inf, Y, dct24, spec, cfg)
    omega = dense_stripe_dictionary(dct24, 0.0)

    def independent(dictionary, theta=0.0):
        return StripeDictionary(omega, np.zeros_like(omega), 0.0, omega, dictionary.n, dictionary.m)

    monkeypatch.setattr(l2inf, "build_stripe_dictionary", independent)
    np.testing.assert_array_equal(quiet(solve_l2inf, Y, dct24, spec, cfg), plain)


# -- restoration ----------------------------------------------------------------------------

def test_restore_feasibility_paths(rng, dct24):
    Y = rng.standard_normal((6, 6)) * 3
    spec = ConstraintSpec.uniform(Y.shape, 0.2)
    prox = PatchProx(Y, dct24, spec, PpxaConfig())
    good = quiet(solve_l2inf, Y, dct24, spec, PpxaConfig(max_outer=50))
    assert restore_feasibility(Y, good, dct24, prox)[1] == "none"
    # a sparse code far from feasible, then no code at all
    start = np.zeros_like(good)
    start[:, :, 0] = good[:, :, 0]
    for code in (start, np.zeros_like(good)):
        fixed, how = restore_feasibility(Y, code, dct24, prox)
        assert how in ("support", "exact")
        assert_feasible(Y, fixed, dct24, spec.thresholds)
        if how == "support":
            assert np.all(fixed[code == 0] == 0)


def test_exact_code_reproduces_target(rng, dct24):
    X = rng.standard_normal((5, 6))
    code = l2inf.exact_code(X, dct24)
    np.testing.assert_allclose(synthesize(dct24, code), X, atol=1e-12)


# -- image update ----------------------------------------------------------------------------

def test_reconstruct_denoise_examples(rng, dct24):
    Y = rng.standard_normal((5, 5))
    code = rng.standard_normal((5, 5, 4))
    np.testing.assert_allclose(reconstruct_denoise(Y, code, dct24, 0.0), synthesize(dct24, code))
    np.testing.assert_allclose(reconstruct_denoise(Y, np.zeros_like(code), dct24, 2.0), Y / 3.0)
    big = reconstruct_denoise(Y, code, dct24, 1e9)
    assert np.linalg.norm(big - Y) <= 1e-6 * np.linalg.norm(Y)
    with pytest.raises(InvalidArgumentError):
        reconstruct_denoise(Y, code, dct24, -1.0)


def test_dct_dictionary_solution_with_larger_atoms(rng):
    D = build_dct_dictionary(3, 9)
    Y = rng.standard_normal((7, 7)) * 2
    spec = ConstraintSpec.from_noise(Y.shape, 3, 0.3)
    code = quiet(solve_l2inf, Y, D, spec, PpxaConfig(max_outer=40))
    assert_feasible(Y, code, D, spec.thresholds)
