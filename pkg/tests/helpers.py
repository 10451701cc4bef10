"""Shared assertions and data loading for the tests."""
from pathlib import Path

import numpy as np

from oracles import dense_stripe_dictionary
from stripecsc.core import extract_patches, extract_stripes
from stripecsc.io import read_image

DATA = Path(__file__).parent / "data"


def load(name):
    return read_image(DATA / name)


def patch_excess(Y, code, dictionary, thresholds, theta=0.0, mask=None):
    """``||mask (Omega_theta S_i G - R_i Y)||^2 - T_i`` for every patch, using the dense ``Omega_theta``."""
    n = dictionary.n
    H, W = Y.shape
    omega = dense_stripe_dictionary(dictionary, theta)
    M = np.ones(Y.shape) if mask is None else np.asarray(mask, dtype=float)
    w = extract_patches(M, n).reshape(H * W, -1)
    resid = w * (extract_stripes(code, n).reshape(H * W, -1) @ omega.T
                 - extract_patches(Y, n).reshape(H * W, -1))
    return (resid ** 2).sum(axis=1) - np.asarray(thresholds, dtype=float).reshape(-1)


def assert_feasible(Y, code, dictionary, thresholds, theta=0.0, mask=None, feas_tol=1e-6):
    """Every patch constraint holds within ``10 feas_tol T_i``."""
    excess = patch_excess(Y, code, dictionary, thresholds, theta, mask)
    slack = 10.0 * feas_tol * np.asarray(thresholds, dtype=float).reshape(-1)
    worst = int(np.argmax(excess - slack))
    assert excess[worst] <= slack[worst], (
        f"patch {divmod(worst, Y.shape[1])} exceeds its bound by {excess[worst]:.3g} "
        f"(allowed {slack[worst]:.3g})")
    return float(np.max(excess / np.maximum(np.asarray(thresholds).reshape(-1), 1e-12)))
