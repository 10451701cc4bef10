import math

import numpy as np
import pytest

from stripecsc import InvalidArgumentError
from stripecsc.diagnostics import (PSNR_CAP, atom_usage_histogram, capped_psnr,
                                   diff_sparsity_maps, invert_lcn, local_contrast_normalize, psnr,
                                   sparsity_map, top1_share, tune_log_bisection)
from stripecsc.diagnostics import _box_mean


# -- LCN ----------------------------------------------------------------------------------

def test_lcn_constant_image_is_zero():
    Z, _ = local_contrast_normalize(np.full((9, 9), 42.0), window=3)
    assert not np.any(np.abs(Z) > 1e-12)


def test_lcn_inverts_exactly(camera32):
    for window in (1, 3, 9):
        Z, side = local_contrast_normalize(camera32, window=window)
        np.testing.assert_allclose(invert_lcn(Z, side), camera32, atol=1e-10)


def test_lcn_full_window_output_has_zero_mean(rng):
    X = rng.standard_normal((9, 9)) * 30 + 100
    Z, _ = local_contrast_normalize(X, window=9)
    assert np.abs(_box_mean(Z, 9)).max() <= 1e-10


@pytest.mark.xfail(strict=True, reason="a box filter is not idempotent: the local mean of "
                   "X - box(X) is box(X) - box(box(X)), which is nonzero in general")
def test_lcn_local_window_output_has_zero_mean(camera32):
    Z, _ = local_contrast_normalize(camera32, window=5)
    assert np.abs(_box_mean(Z, 5)).max() <= 1e-10


def test_lcn_validation():
    X = np.zeros((6, 6))
    for window in (0, 4, 7):
        with pytest.raises(InvalidArgumentError):
            local_contrast_normalize(X, window=window)
    with pytest.raises(InvalidArgumentError):
        local_contrast_normalize(X, window=3, eps=0.0)


# -- histograms and maps -------------------------------------------------------------

def test_histogram_examples(rng):
    assert not np.any(atom_usage_histogram(np.zeros((4, 4, 9))))
    code = np.zeros((4, 4, 9))
    code[1, 2, 5] = 0.3
    np.testing.assert_array_equal(atom_usage_histogram(code), np.eye(9, dtype=int)[5])
    code = rng.standard_normal((6, 6, 9)) * (rng.random((6, 6, 9)) > 0.7)
    counts = atom_usage_histogram(code, 0.1)
    assert counts.sum() == np.count_nonzero(np.abs(code) > 0.1)
    with pytest.raises(InvalidArgumentError):
        atom_usage_histogram(code, -1.0)


def test_top1_share():
    assert top1_share([0, 0, 0]) == 0.0
    assert top1_share([1, 3, 0]) == 0.75


def test_sparsity_map_examples(rng):
    assert not np.any(sparsity_map(np.zeros((3, 4, 2))))
    code = rng.standard_normal((5, 6, 4))
    M = sparsity_map(code)
    assert M.shape == (5, 6)
    assert M.sum() == pytest.approx(np.abs(code).sum(), rel=1e-12)
    assert not np.any(diff_sparsity_maps(M, M))


def test_diff_sparsity_maps_shift(rng):
    a = rng.standard_normal((6, 7))
    b = np.roll(a, (2, -1), axis=(0, 1))
    d = diff_sparsity_maps(b, a, shift=(2, -1))
    assert d.shape == (4, 6)
    assert not np.any(d)
    with pytest.raises(InvalidArgumentError):
        diff_sparsity_maps(a, b, shift=(6, 0))
    with pytest.raises(InvalidArgumentError):
        diff_sparsity_maps(a, b[:5], shift=(0, 0))


# -- PSNR -----------------------------------------------------------------------------------

def test_psnr_examples(rng):
    X = rng.random((8, 8)) * 255
    assert psnr(X, X + 1.0) == pytest.approx(10 * math.log10(255.0 ** 2), abs=1e-9)
    assert psnr(X, X + 1.0) == pytest.approx(48.13, abs=5e-3)
    assert psnr(X, X + 255.0) == pytest.approx(0.0, abs=1e-12)
    assert psnr(X, X) == math.inf and capped_psnr(psnr(X, X)) == PSNR_CAP == 99.0
    assert capped_psnr(31.5) == 31.5


def test_psnr_mask_and_validation(rng):
    X = rng.random((4, 4))
    Y = X.copy()
    Y[0, 0] += 2.0
    mask = np.zeros((4, 4))
    mask[0, :2] = 1
    assert psnr(X, Y, peak=1.0, mask=mask) == pytest.approx(10 * math.log10(1 / 2.0))
    with pytest.raises(InvalidArgumentError):
        psnr(X, Y, peak=0.0)
    with pytest.raises(InvalidArgumentError):
        psnr(X, Y[:3])


# -- tuning -----------------------------------------------------------------------------------

def test_tune_log_bisection_finds_target():
    res = tune_log_bisection(lambda p: 50 - 10 * math.log10(p), 1e-3, 1e3, 40.0, steps=30)
    assert res.param == pytest.approx(10.0, rel=1e-6)
    assert len(res.history) == 30
    inc = tune_log_bisection(lambda p: p, 1.0, 100.0, 10.0, steps=30, increasing=True)
    assert inc.param == pytest.approx(10.0, rel=1e-6)


def test_tune_validation():
    with pytest.raises(InvalidArgumentError):
        tune_log_bisection(lambda p: p, 2.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        tune_log_bisection(lambda p: p, 1.0, 2.0, 0.0, steps=0)
