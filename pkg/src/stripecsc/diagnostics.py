"""Measurements on codes and images: LCN, atom usage, sparsity maps, PSNR, parameter tuning."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import needle_l1_map
from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-8
PSNR_CAP = 99.0


# -- local contrast normalization -------------------------------------------------

@dataclass(frozen=True)
class LcnSide:
    """What :func:`invert_lcn` needs to undo a normalization."""

    mean: np.ndarray
    scale: np.ndarray


def _box_mean(x, window):
    return uniform_filter(x, size=window, mode="wrap")


def local_contrast_normalize(X, window=9, eps=1e-2):
    """Subtract a periodic box-filtered mean and divide by ``max(local std, eps)``.

    Returns ``(normalized, LcnSide)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidArgumentError("expected a 2-D image")
    if window < 1 or window % 2 == 0 or window > min(X.shape):
        raise InvalidArgumentError(
            f"window must be odd, positive and at most {min(X.shape)}, got {window}")
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    mean = _box_mean(X, window)
    centered = X - mean
    std = np.sqrt(np.maximum(_box_mean(centered ** 2, window), 0.0))
    scale = np.maximum(std, eps)
    return centered / scale, LcnSide(mean, scale)


def invert_lcn(Z, side):
    return np.asarray(Z, dtype=float) * side.scale + side.mean


# -- code statistics ------------------------------------------------------------------

def atom_usage_histogram(code, zero_tol=ZERO_TOL):
    """Number of coefficients with magnitude above ``zero_tol``, per atom."""
    if zero_tol < 0:
        raise InvalidArgumentError("zero_tol must be nonnegative")
    code = np.asarray(code)
    return (np.abs(code) > zero_tol).reshape(-1, code.shape[-1]).sum(axis=0)


def top1_share(counts):
    """Fraction of all nonzeros held by the most used atom (0 for an empty code)."""
    counts = np.asarray(counts)
    total = counts.sum()
    return float(counts.max() / total) if total > 0 else 0.0


def sparsity_map(code):
    """``H x W`` map of needle l1 norms."""
    return needle_l1_map(np.asarray(code, dtype=float))


def diff_sparsity_maps(a, b, shift=(0, 0)):
    """``a - b`` after moving ``b`` by ``shift = (dr, dc)``, on the overlap only.

    Entry ``(r, c)`` of the result compares ``a[r0 + r, c0 + c]`` with
    ``b[r0 + r - dr, c0 + c - dc]`` where ``(r0, c0) = (max(dr, 0), max(dc, 0))``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidArgumentError("maps must be 2-D with equal shapes")
    dr, dc = (int(s) for s in shift)
    H, W = a.shape
    if abs(dr) >= H or abs(dc) >= W:
        raise InvalidArgumentError(f"shift {shift} leaves no overlap on a {H}x{W} map")
    r0, r1 = max(dr, 0), H + min(dr, 0)
    c0, c1 = max(dc, 0), W + min(dc, 0)
    return a[r0:r1, c0:c1] - b[r0 - dr:r1 - dr, c0 - dc:c1 - dc]


# -- quality ---------------------------------------------------------------------------

def psnr(X, X_hat, peak=255.0, mask=None):
    """``10 log10(peak^2 / MSE)``; ``inf`` for identical inputs.

    With ``mask`` the error is averaged over the pixels where it is nonzero.
    """
    if not peak > 0:
        raise InvalidArgumentError("peak must be positive")
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise InvalidArgumentError("images must have the same shape")
    err = (X - X_hat) ** 2
    if mask is not None:
        err = err[np.asarray(mask) != 0]
    mse = float(err.mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def capped_psnr(value):
    """PSNR as written to CSV files: ``inf`` becomes :data:`PSNR_CAP`."""
    return min(float(value), PSNR_CAP)


# -- parameter tuning ---------------------------------------------------------------

@dataclass(frozen=True)
class TuneResult:
    param: float
    value: float
    history: tuple


def tune_log_bisection(evaluate, lo, hi, target, steps=12, increasing=False):
    """Bisect ``log(param)`` on ``[lo, hi]`` so that ``evaluate(param)`` approaches ``target``.

    ``evaluate`` must be monotone in its argument (decreasing unless
    ``increasing``). Returns the evaluated parameter closest to the target.
    """
    if not 0 < lo < hi:
        raise InvalidArgumentError("need 0 < lo < hi")
    if steps < 1:
        raise InvalidArgumentError("steps must be positive")
    a, b = math.log(lo), math.log(hi)
    history = []
    for _ in range(steps):
        mid = 0.5 * (a + b)
        p = math.exp(mid)
        v = float(evaluate(p))
        history.append((p, v))
        logger.debug("tune: param %.6g -> %.6g (target %.6g)", p, v, target)
        above = v > target
        if above != increasing:
            a = mid
        else:
            b = mid
    p, v = min(history, key=lambda pv: abs(pv[1] - target))
    return TuneResult(p, v, tuple(history))
