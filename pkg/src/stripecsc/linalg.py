"""Matrix-free conjugate gradient and power iteration."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import InvalidArgumentError, NumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearMap:
    """A linear map on arrays of a fixed shape.

    ``apply`` may take and return arrays of any shape as long as it is
    consistent; solvers work on flattened copies.
    """

    shape: tuple
    apply: Callable[[np.ndarray], np.ndarray]

    @property
    def dimension(self):
        return int(np.prod(self.shape))

    @classmethod
    def from_matrix(cls, A):
        A = np.asarray(A, dtype=float)
        return cls((A.shape[1],), lambda x: A @ x)

    def __call__(self, x):
        return np.asarray(self.apply(np.reshape(x, self.shape)), dtype=float).reshape(self.shape)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norms: list = field(default_factory=list)

    @property
    def residual(self):
        return self.residual_norms[-1]


def conjugate_gradient(A, b, tol=1e-10, max_iter=100):
    """Solve ``A x = b`` for symmetric positive-definite ``A``, from ``x = 0``.

    Stops once ``||A x - b|| <= tol * ||b||``. If ``max_iter`` is exhausted the
    iterate with the smallest residual is returned with ``converged=False``.
    """
    if tol <= 0 or max_iter < 1:
        raise InvalidArgumentError("tol and max_iter must be positive")
    b = np.asarray(b, dtype=float).reshape(A.shape)
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    rr = float(np.vdot(r, r))
    history = [np.sqrt(rr)]
    if bnorm == 0.0:
        return CGResult(x, 0, True, history)
    best, best_res = x.copy(), history[0]
    p = r.copy()
    for k in range(1, max_iter + 1):
        Ap = A(p)
        pAp = float(np.vdot(p, Ap))
        if not np.isfinite(pAp):
            raise NumericalFailure("non-finite curvature in conjugate gradient", k)
        if pAp <= 0:
            logger.warning("conjugate gradient hit nonpositive curvature at iteration %d", k)
            break
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(np.vdot(r, r))
        if not np.isfinite(rr_new):
            raise NumericalFailure("non-finite residual in conjugate gradient", k)
        history.append(np.sqrt(rr_new))
        if history[-1] < best_res:
            best, best_res = x, history[-1]
        if history[-1] <= tol * bnorm:
            return CGResult(x, k, True, history)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(best, len(history) - 1, False, history)


def power_method(A, iters=100, seed=0):
    """Largest eigenvalue of a symmetric positive-semidefinite ``A`` (Rayleigh quotient)."""
    if iters < 1:
        raise InvalidArgumentError("iters must be positive")
    for attempt in range(4):
        rng = np.random.default_rng(seed + attempt)
        x = rng.standard_normal(A.shape)
        norm = np.linalg.norm(x)
        if norm > 0:
            break
    else:
        raise NumericalFailure("could not draw a nonzero start vector")
    x /= norm
    estimate = 0.0
    for k in range(iters):
        y = A(x)
        estimate = float(np.vdot(x, y))
        ynorm = np.linalg.norm(y)
        if not np.isfinite(ynorm):
            raise NumericalFailure("non-finite value in power iteration", k)
        if ynorm == 0:
            return 0.0
        x = y / ynorm
    return max(estimate, 0.0)
