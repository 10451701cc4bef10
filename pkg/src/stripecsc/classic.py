"""Baselines: global l2-l1 pursuit by FISTA, per-patch OMP and patch averaging."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import analyze, extract_patches, synthesize
from .exceptions import InvalidArgumentError
from .linalg import LinearMap, power_method
from .prox import shrink
from .trace import IterRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FistaConfig:
    max_iter: int = 500
    step_safety: float = 1.05
    tol: float = 1e-8
    power_iters: int = 100

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")
        if self.tol <= 0:
            raise InvalidArgumentError("tol must be positive")
        if self.step_safety <= 1:
            raise InvalidArgumentError("step_safety must exceed 1")


def l1_objective(Y, dictionary, code, lam):
    res = Y - synthesize(dictionary, code)
    return 0.5 * float(np.vdot(res, res)) + lam * float(np.abs(code).sum())


def gram_norm(dictionary, shape, iters=100, seed=0):
    """Largest eigenvalue of ``D^T D`` on an ``shape`` grid."""
    op = LinearMap(shape + (dictionary.m,),
                   lambda g: analyze(dictionary, synthesize(dictionary, g)))
    return power_method(op, iters=iters, seed=seed)


def solve_l1(Y, dictionary, lam, cfg=None, init=None, trace=None):
    """FISTA for ``0.5 ||Y - D G||^2 + lam ||G||_1``.

    Momentum is reset whenever the objective would increase, which keeps the
    recorded objective monotone.
    """
    cfg = cfg or FistaConfig()
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    Y = np.asarray(Y, dtype=float)
    shape = (Y.shape[0], Y.shape[1], dictionary.m)
    L = cfg.step_safety * gram_norm(dictionary, Y.shape, cfg.power_iters)
    step = 1.0 / L
    x = np.zeros(shape) if init is None else np.array(init, dtype=float)
    if not np.any(Y):
        return np.zeros(shape)
    fx = l1_objective(Y, dictionary, x, lam)
    z, t = x, 1.0
    for k in range(1, cfg.max_iter + 1):
        grad = analyze(dictionary, synthesize(dictionary, z) - Y)
        x_new = shrink(z - step * grad, lam * step)
        f_new = l1_objective(Y, dictionary, x_new, lam)
        if f_new > fx:
            # restart from the last accepted point with a plain ISTA step
            grad = analyze(dictionary, synthesize(dictionary, x) - Y)
            x_new = shrink(x - step * grad, lam * step)
            f_new = l1_objective(Y, dictionary, x_new, lam)
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = float(np.linalg.norm(x_new - x))
        rel = abs(fx - f_new) / max(abs(fx), 1e-300)
        x, fx, t = x_new, f_new, t_new
        if trace is not None:
            trace.append(IterRecord(k, fx, change, 0.0))
        if rel < cfg.tol:
            break
    return x


def omp_patch(y, dictionary, err_threshold, max_atoms=None):
    """Greedy OMP of one vectorized patch ``y`` over the local dictionary.

    Stops when the squared residual is at most ``err_threshold`` or
    ``max_atoms`` atoms are active.
    """
    if err_threshold < 0:
        raise InvalidArgumentError("err_threshold must be nonnegative")
    Dl = dictionary.matrix
    m = dictionary.m
    max_atoms = min(max_atoms or Dl.shape[0], m)
    y = np.asarray(y, dtype=float).ravel()
    coef = np.zeros(m)
    residual = y.copy()
    active = []
    while float(residual @ residual) > err_threshold and len(active) < max_atoms:
        corr = np.abs(Dl.T @ residual)
        corr[active] = -1.0
        j = int(np.argmax(corr))
        sub = Dl[:, active + [j]]
        gram = sub.T @ sub
        if np.linalg.cond(gram) > 1e12:
            warnings.warn(f"OMP active set became singular at atom {j}; stopping",
                          RuntimeWarning, stacklevel=2)
            break
        active.append(j)
        beta = np.linalg.solve(gram, sub.T @ y)
        residual = y - sub @ beta
        coef[:] = 0.0
        coef[active] = beta
    return coef


def omp_patches(Y, dictionary, err_threshold, max_atoms=None):
    """OMP on every periodic patch; returns needles shaped like a code."""
    patches = extract_patches(Y, dictionary.n)
    H, W, _ = patches.shape
    out = np.zeros((H, W, dictionary.m))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in range(H):
            for c in range(W):
                out[r, c] = omp_patch(patches[r, c], dictionary, err_threshold, max_atoms)
    return out


def patch_average(needles, dictionary, Y, lam):
    """Closed-form image update ``(lam Y + sum_i R_i^T D_l beta_i) / (lam + n^2)``."""
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    Y = np.asarray(Y, dtype=float)
    # placing every slice at its own location is exactly the global synthesis
    slices = synthesize(dictionary, needles)
    return (lam * Y + slices) / (lam + dictionary.n ** 2)
