"""ADMM for the l2-l1,inf pursuit ``0.5 ||Y - D G||^2 + lam max_i ||S_i G||_1``.

Every location gets a splitting variable ``gamma_i = S_i G``. The code update
is a regularized least-squares problem solved by conjugate gradient, and the
joint update of all splitting variables reduces, in epigraph form, to a
single radius ``t`` shared by every stripe followed by independent l1-ball
projections.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (analyze, extract_stripes, l1inf_norm, scatter_stripes,
                   stripe_shifts, synthesize)
from .exceptions import ConvergenceWarning, InvalidArgumentError
from .linalg import LinearMap, conjugate_gradient
from .prox import SortedRows, solve_radius
from .trace import IterRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    max_iter: int = 500
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    cg_tol: float = 1e-6
    cg_max_iter: int = 50
    radius_tol: float = 1e-6  # relative to the search bracket
    readout: str = "consensus"  # or "split"

    def __post_init__(self):
        for name in ("rho", "tol_primal", "tol_dual", "cg_tol", "radius_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.max_iter < 1 or self.cg_max_iter < 1:
            raise InvalidArgumentError("iteration budgets must be positive")
        if self.readout not in ("consensus", "split"):
            raise InvalidArgumentError("readout must be 'consensus' or 'split'")


@dataclass
class AdmmState:
    code: np.ndarray
    gammas: np.ndarray  # (H, W, (2n-1)**2, m)
    duals: np.ndarray
    rho: float
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    radius: float = 0.0
    history: list = field(default_factory=list)

    def split_code(self):
        """Center needles of the splitting variables: ``gamma_i`` restricted to location ``i``.

        Each is an l1-ball projection and therefore exactly sparse; at
        convergence it equals the consensus code.
        """
        return self.gammas[:, :, self.gammas.shape[2] // 2, :].copy()

    @classmethod
    def zeros(cls, shape, dictionary, rho):
        H, W = shape
        S = len(stripe_shifts(dictionary.n))
        return cls(np.zeros((H, W, dictionary.m)),
                   np.zeros((H, W, S, dictionary.m)),
                   np.zeros((H, W, S, dictionary.m)), rho)


def l1inf_objective(Y, dictionary, code, lam):
    res = Y - synthesize(dictionary, code)
    return 0.5 * float(np.vdot(res, res)) + lam * l1inf_norm(code, dictionary.n)


def _normal_operator(dictionary, shape, rho):
    S = (2 * dictionary.n - 1) ** 2
    return LinearMap(shape, lambda g: analyze(dictionary, synthesize(dictionary, g)) + rho * S * g)


def admm_gamma_update(state, Y, dictionary, cfg=None):
    """Solve ``(D^T D + rho (2n-1)^2 I) G = D^T Y + rho sum_i S_i^T (gamma_i + u_i)``.

    Conjugate gradient runs on the correction to the previous code.
    """
    cfg = cfg or AdmmConfig(rho=state.rho)
    n = dictionary.n
    A = _normal_operator(dictionary, state.code.shape, state.rho)
    rhs = analyze(dictionary, Y) + state.rho * scatter_stripes(state.gammas + state.duals, n)
    res = conjugate_gradient(A, rhs - A(state.code), tol=cfg.cg_tol, max_iter=cfg.cg_max_iter)
    return state.code + res.x


def admm_split_update(state, code_new, lam, dictionary, cfg=None):
    """Epigraph step: common radius ``t*`` then ``gamma_i = P_{B(t*)}(S_i G - u_i)``."""
    cfg = cfg or AdmmConfig(rho=state.rho)
    shape = state.gammas.shape
    v = (extract_stripes(code_new, dictionary.n) - state.duals).reshape(shape[0] * shape[1], -1)
    rows = SortedRows(v)
    hi = float(rows.l1.max())
    tol = cfg.radius_tol * hi if hi > 0 else 1.0
    # lam * t + (rho / 2) sum dist^2  ==  (rho / 2) * ((2 lam / rho) t + sum dist^2)
    found = solve_radius(None, 2.0 * lam / state.rho, tol, sorted_rows=rows)
    state.radius = found.t_star
    return rows.project(found.t_star).reshape(shape)


def admm_step(state, Y, dictionary, lam, cfg):
    n = dictionary.n
    code = admm_gamma_update(state, Y, dictionary, cfg)
    gammas = admm_split_update(state, code, lam, dictionary, cfg)
    stripes = extract_stripes(code, n)
    gap = gammas - stripes
    state.duals = state.duals + gap
    H, W, S, m = gammas.shape
    state.primal_residual = float(np.sqrt((gap.reshape(H * W, -1) ** 2).sum(axis=1)).max())
    state.dual_residual = state.rho * float(np.linalg.norm(scatter_stripes(gammas - state.gammas, n)))
    state.gammas = gammas
    state.code = code
    state.iteration += 1
    return state


def solve_l1inf(Y, dictionary, lam, cfg=None, init=None, trace=None, state=None):
    """Minimize ``0.5 ||Y - D G||^2 + lam ||G||_{1,inf}`` by ADMM; returns the code.

    With ``cfg.readout == "split"`` the exactly sparse :meth:`AdmmState.split_code`
    is returned instead of the least-squares consensus code.
    """
    cfg = cfg or AdmmConfig()
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    Y = np.asarray(Y, dtype=float)
    if state is None:
        state = AdmmState.zeros(Y.shape, dictionary, cfg.rho)
        if init is not None:
            state.code = np.array(init, dtype=float)
            state.gammas = extract_stripes(state.code, dictionary.n)
    if not np.any(Y):
        return np.zeros_like(state.code)
    n = dictionary.n
    converged = False
    for _ in range(cfg.max_iter):
        admm_step(state, Y, dictionary, lam, cfg)
        scale_p = 1.0 + float(np.linalg.norm(state.code))
        scale_d = 1.0 + state.rho * float(np.linalg.norm(scatter_stripes(state.duals, n)))
        if trace is not None:
            trace.append(IterRecord(state.iteration,
                                    l1inf_objective(Y, dictionary, state.code, lam),
                                    state.primal_residual, state.dual_residual))
        if (state.primal_residual <= cfg.tol_primal * scale_p
                and state.dual_residual <= cfg.tol_dual * scale_d):
            converged = True
            break
    if not converged:
        warnings.warn(f"l1-inf ADMM stopped at max_iter={cfg.max_iter} "
                      f"(primal {state.primal_residual:.3g}, dual {state.dual_residual:.3g})",
                      ConvergenceWarning, stacklevel=2)
    logger.debug("l1inf ADMM finished after %d iterations", state.iteration)
    return state.split_code() if cfg.readout == "split" else state.code
