"""Shrinkage, l1-ball projection and the epigraph radius search."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def shrink(x, lam):
    """Soft thresholding ``sign(x) * max(|x| - lam, 0)``; ``lam`` may broadcast."""
    if np.any(np.asarray(lam) < 0):
        raise InvalidArgumentError(f"threshold must be nonnegative, got {lam}")
    x = np.asarray(x, dtype=float)
    return x - np.clip(x, -lam, lam)


def _threshold(x, r):
    """Shrinkage level that maps ``x`` onto the l1 sphere of radius ``r``."""
    u = np.sort(np.abs(x))[::-1]
    csum = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.count_nonzero(csum - k * u < r)
    return (csum[rho - 1] - r) / rho


def project_l1_ball(x, r):
    """Euclidean projection of ``x`` onto ``{z : ||z||_1 <= r}``."""
    if r < 0:
        raise InvalidArgumentError(f"radius must be nonnegative, got {r}")
    x = np.asarray(x, dtype=float)
    if np.abs(x).sum() <= r:
        return x.copy()
    if r == 0:
        return np.zeros_like(x)
    return shrink(x, _threshold(x.ravel(), r))


def dist_l1_ball(x, r):
    """Euclidean distance from ``x`` to the l1 ball of radius ``r``."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - project_l1_ball(x, r)))


class SortedRows:
    """Rows of a matrix prepared for repeated projections at varying radius.

    Sorting once makes every later evaluation of the per-row shrinkage level and
    squared distance to the ball a linear pass without re-sorting.
    """

    def __init__(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        u = -np.sort(-np.abs(rows), axis=1)
        self.rows = rows
        self.csum = np.cumsum(u, axis=1)
        self.sqcum = np.cumsum(u * u, axis=1)
        k = np.arange(1, rows.shape[1] + 1)
        # nondecreasing along each row
        self.gap = self.csum - k * u
        self.l1 = self.csum[:, -1]
        self.sq = self.sqcum[:, -1]

    def thresholds(self, t):
        """Per-row shrinkage level projecting onto the ball of radius ``t``."""
        lam = np.zeros(self.rows.shape[0])
        out = self.l1 > t
        if not np.any(out):
            return lam
        if t <= 0:
            lam[out] = np.abs(self.rows[out]).max(axis=1)
            return lam
        k = np.count_nonzero(self.gap[out] < t, axis=1)
        idx = np.flatnonzero(out)
        lam[out] = (self.csum[idx, k - 1] - t) / k
        return lam

    def sq_distances(self, t):
        d = np.zeros(self.rows.shape[0])
        out = self.l1 > t
        if not np.any(out):
            return d
        if t <= 0:
            d[out] = self.sq[out]
            return d
        idx = np.flatnonzero(out)
        k = np.count_nonzero(self.gap[out] < t, axis=1)
        lam = (self.csum[idx, k - 1] - t) / k
        d[out] = k * lam * lam + self.sq[out] - self.sqcum[idx, k - 1]
        return d

    def project(self, t):
        lam = self.thresholds(t)
        return np.sign(self.rows) * np.maximum(np.abs(self.rows) - lam[:, None], 0.0)


@dataclass(frozen=True)
class RadiusSearchResult:
    t_star: float
    objective: float
    evaluations: int


def _as_rows(v_list):
    if isinstance(v_list, np.ndarray) and v_list.ndim == 2:
        return v_list
    vecs = [np.ravel(np.asarray(v, dtype=float)) for v in v_list]
    if not vecs:
        raise InvalidArgumentError("at least one vector is required")
    width = max(v.size for v in vecs)
    rows = np.zeros((len(vecs), width))
    for i, v in enumerate(vecs):
        rows[i, :v.size] = v  # zero padding leaves projections unchanged
    return rows


def solve_radius(v_list, lam, tol, sorted_rows=None):
    """Minimize ``lam * t + sum_i dist(v_i, B_t)**2`` over ``t >= 0``.

    The objective is convex in ``t``, so a golden-section search on
    ``[0, max_i ||v_i||_1]`` suffices; beyond the upper end every distance is
    zero and only the linear term grows.
    """
    if lam < 0:
        raise InvalidArgumentError(f"weight must be nonnegative, got {lam}")
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    rows = sorted_rows if sorted_rows is not None else SortedRows(_as_rows(v_list))
    if rows.rows.shape[0] == 0:
        raise InvalidArgumentError("at least one vector is required")
    hi = float(rows.l1.max())
    evals = 0

    def f(t):
        nonlocal evals
        evals += 1
        return lam * t + float(rows.sq_distances(t).sum())

    if lam == 0 or hi == 0:
        # distances vanish from hi on; hi is the smallest such radius
        return RadiusSearchResult(hi, f(hi), evals)

    a, b = 0.0, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    t, ft = (c, fc) if fc <= fd else (d, fd)
    for edge in (0.0, hi):
        fe = f(edge)
        if fe < ft or (fe == ft and edge < t):
            t, ft = edge, fe
    return RadiusSearchResult(float(t), float(ft), evals)
