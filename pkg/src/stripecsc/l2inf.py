"""PPXA for the l2,inf-l1 pursuit.

Solves ``min ||G||_1  s.t.  ||M_i (Omega_theta S_i G - R_i Y)||^2 <= T_i`` for
every location ``i``. The objective is split into ``N`` terms
``||G||_1 / N + indicator_i(G)``; each term's proximal operator is a small
constrained problem on the stripe of ``i`` (coordinates outside the stripe are
simply soft-thresholded). It is solved through its Lagrangian: a semismooth
Newton method on the patch-space dual (FISTA optionally) for a fixed
multiplier, and a safeguarded false-position search on the multiplier.

Storage: every auxiliary code ``G_i`` of PPXA coincides, outside stripe ``i``,
with a common background array, because those coordinates start equal and
receive identical updates. The solver therefore keeps one background code
plus one stripe-sized block per location instead of ``N`` full codes.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .classic import FistaConfig
from .core import (build_stripe_dictionary, extract_patches, extract_stripe,
                   extract_stripes, scatter_stripe, scatter_stripes, synthesize)
from .exceptions import (ConstraintInfeasible, ConvergenceWarning, InvalidArgumentError,
                         NumericalFailure)
from .linalg import LinearMap, conjugate_gradient
from .prox import shrink
from .trace import IterRecord

logger = logging.getLogger(__name__)

EPS = 1e-12


@dataclass(frozen=True)
class PpxaConfig:
    mu: float | None = None  # None: c = auto_scale * rms of the observed data
    auto_scale: float = 0.03
    relaxation: float = 1.6
    max_outer: int = 300
    tol: float = 1e-6
    feas_tol: float = 1e-6
    inner: FistaConfig = field(default_factory=lambda: FistaConfig(max_iter=200, tol=1e-10))
    bisection_tol: float = 1e-4
    inner_method: str = "newton"  # or "fista"
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    theta: float = 0.0
    lambda_start: float = 1e-3
    growth: float = 10.0
    lambda_cap: float = 1e12
    max_bisect: int = 60
    readout: str = "average"  # or "sparse"

    def __post_init__(self):
        if not 0.0 < self.relaxation < 2.0:
            raise InvalidArgumentError("relaxation must lie in (0, 2)")
        if self.mu is not None and self.mu <= 0:
            raise InvalidArgumentError("mu must be positive")
        if self.inner_method not in ("newton", "fista"):
            raise InvalidArgumentError("inner_method must be 'newton' or 'fista'")
        if self.readout not in ("average", "sparse"):
            raise InvalidArgumentError("readout must be 'average' or 'sparse'")
        if self.auto_scale <= 0:
            raise InvalidArgumentError("auto_scale must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidArgumentError("theta must lie in [0, 1]")
        for name in ("tol", "feas_tol", "bisection_tol", "lambda_start"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.growth <= 1 or self.max_outer < 1:
            raise InvalidArgumentError("growth must exceed 1 and max_outer be positive")


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-patch squared-error bounds and an optional observation mask.

    ``thresholds[r, c]`` bounds the error of the patch whose top-left corner
    is ``(r, c)``.
    """

    thresholds: np.ndarray
    mask: np.ndarray | None = None
    sigma: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        T = np.asarray(self.thresholds, dtype=float)
        if T.ndim != 2 or np.any(T < 0) or not np.all(np.isfinite(T)):
            raise InvalidArgumentError("thresholds must be a finite nonnegative 2-D array")
        object.__setattr__(self, "thresholds", T)
        if self.mask is not None:
            M = np.asarray(self.mask, dtype=float)
            if M.shape != T.shape or not np.all((M == 0) | (M == 1)):
                raise InvalidArgumentError("mask must be binary with the image shape")
            object.__setattr__(self, "mask", M)
        if self.sigma < 0 or self.C <= 0:
            raise InvalidArgumentError("sigma must be >= 0 and C > 0")

    @classmethod
    def uniform(cls, shape, T):
        return cls(np.full(shape, float(T)))

    @classmethod
    def from_noise(cls, shape, n, sigma, C=1.0):
        """``T = C n^2 sigma^2`` on every patch."""
        return cls(np.full(shape, C * n * n * sigma ** 2), sigma=sigma, C=C)


def prox_scale(Y, mask=None, factor=0.03):
    """Data-relative prox parameter ``c``: ``factor`` times the RMS of the observed pixels."""
    Y = np.asarray(Y, dtype=float)
    vals = Y if mask is None else Y[np.asarray(mask) > 0]
    rms = float(np.sqrt(np.mean(vals ** 2))) if vals.size else 0.0
    return factor * rms if rms > 0 else factor


def _dual_primal(g, w, A, c):
    """Minimizer of the Lagrangian in ``z`` for the patch-space dual variable ``w``."""
    return shrink(g - c * (w @ A), c)


def _neg_dual(w, z, g, y, lam, A, c):
    """``|w|^2 / (4 lam) + <w, y> - (||z||_1 + ||z - g||^2 / (2c) + <A^T w, z>)`` at ``z = z(w)``."""
    inner = (np.abs(z).sum(axis=1) + ((z - g) ** 2).sum(axis=1) / (2.0 * c)
             + np.einsum("ij,ij->i", w, z @ A.T))
    return (w * w).sum(axis=1) / (4.0 * lam) + (w * y).sum(axis=1) - inner


class PatchProx:
    """Batched proximal operators of the per-patch constraint terms.

    For a stripe anchor ``g`` it returns
    ``argmin ||z||_1 + ||z - g||^2 / (2c)  s.t.  ||mask * (A z - y)||^2 <= T``
    with ``A = Omega_theta`` and ``c = N mu`` (or :func:`prox_scale` when ``mu`` is None).
    """

    def __init__(self, Y, dictionary, spec, cfg):
        Y = np.asarray(Y, dtype=float)
        n = dictionary.n
        H, W = Y.shape
        if H < 2 * n - 1 or W < 2 * n - 1:
            raise InvalidArgumentError(f"image must be at least {2 * n - 1} pixels on each side")
        if spec.thresholds.shape != Y.shape:
            raise InvalidArgumentError("threshold map does not match the image")
        self.cfg = cfg
        self.n = n
        self.stripe_dict = build_stripe_dictionary(dictionary, cfg.theta)
        self.A = self.stripe_dict.matrix
        N = H * W
        self.pixel_mask = spec.mask
        self.c = N * cfg.mu if cfg.mu is not None else prox_scale(Y, spec.mask, cfg.auto_scale)
        mask = np.ones(Y.shape) if spec.mask is None else spec.mask
        self.mask = extract_patches(mask, n).reshape(N, -1)
        self.y = extract_patches(Y, n).reshape(N, -1) * self.mask
        self.T = spec.thresholds.reshape(-1)
        self.shape = (H, W)
        self.lipschitz = self._patch_norms()
        # column outer products: A diag(s) A^T == (s @ outer).reshape(P, P)
        self.outer = np.einsum("ik,jk->kij", self.A, self.A).reshape(self.A.shape[1], -1)

    def max_relative_violation(self, code):
        H, W = self.shape
        z = extract_stripes(code, self.n).reshape(H * W, -1)
        idx = np.arange(H * W)
        return float((self.violation(z, idx) / np.maximum(self.T, EPS)).max())

    def _patch_norms(self, iters=100):
        """Largest eigenvalue of ``A^T diag(mask_i) A`` for every patch (batched power method)."""
        A = self.A
        rng = np.random.default_rng(0)
        x = rng.standard_normal((self.mask.shape[0], A.shape[1]))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        est = np.zeros(x.shape[0])
        for _ in range(iters):
            v = ((x @ A.T) * self.mask) @ A
            est = np.einsum("ij,ij->i", x, v)
            nv = np.linalg.norm(v, axis=1, keepdims=True)
            x = np.divide(v, nv, out=np.zeros_like(v), where=nv > 0)
        return np.maximum(est, 0.0)

    def residual_sq(self, z, idx):
        r = (z @ self.A.T - self.y[idx]) * self.mask[idx]
        return np.einsum("ij,ij->i", r, r)

    def violation(self, z, idx):
        """Signed excess of the squared patch error over the bound."""
        return self.residual_sq(z, idx) - self.T[idx]

    def feasible(self, z, idx):
        return self.violation(z, idx) <= self.cfg.feas_tol * np.maximum(self.T[idx], EPS)

    def lagrangian_solve(self, g, idx, lam, z0):
        """Minimize ``||z||_1 + ||z - g||^2 / (2c) + lam ||mask * (A z - y)||^2`` per row (``lam > 0``)."""
        if self.cfg.inner_method == "fista":
            return self.lagrangian_fista(g, idx, lam, z0)
        return self.lagrangian_newton(g, idx, lam, z0)

    def lagrangian_newton(self, g, idx, lam, z0):
        """Semismooth Newton on the patch-sized dual of the Lagrangian problem.

        With ``w = 2 lam mask (A z - y)`` the minimizer is
        ``z(w) = shrink(g - c A^T w, c)`` and ``w`` solves the piecewise-linear
        equation ``F(w) = w - 2 lam mask (A z(w) - y) = 0``. ``F / (2 lam)`` is
        the gradient of the strongly convex negative dual ``psi``, so Newton
        steps are damped by an Armijo search on ``psi``. ``z0`` seeds ``w``.
        """
        cfg = self.cfg
        A, c = self.A, self.c
        P = A.shape[0]
        eye = np.eye(P)
        y, M = self.y[idx], self.mask[idx]
        lam = np.asarray(lam, dtype=float)
        w = 2.0 * lam[:, None] * M * (np.asarray(z0, dtype=float) @ A.T - y)
        active = np.arange(w.shape[0])
        for _ in range(cfg.newton_max_iter):
            if active.size == 0:
                break
            a = active
            ga, ya, Ma, la, wa = g[a], y[a], M[a], lam[a], w[a]
            z = _dual_primal(ga, wa, A, c)
            F = wa - 2.0 * la[:, None] * Ma * (z @ A.T - ya)
            scale = 1.0 + np.linalg.norm(wa, axis=1) + 2.0 * la * np.linalg.norm(ya, axis=1)
            busy = np.linalg.norm(F, axis=1) > cfg.newton_tol * scale
            if not np.any(busy):
                active = a[:0]
                break
            a, ga, ya, Ma, la, wa, z, F = (v[busy] for v in (a, ga, ya, Ma, la, wa, z, F))
            gram = ((z != 0) @ self.outer).reshape(-1, P, P)
            J = eye + (2.0 * c) * la[:, None, None] * (Ma[:, :, None] * gram * Ma[:, None, :])
            d = -np.linalg.solve(J, F[:, :, None])[:, :, 0]
            base = _neg_dual(wa, z, ga, ya, la, A, c)
            slope = (F * d).sum(axis=1) / (2.0 * la)
            step = np.ones(a.size)
            todo = np.arange(a.size)
            for _ls in range(40):
                trial = wa[todo] + step[todo, None] * d[todo]
                zt = _dual_primal(ga[todo], trial, A, c)
                val = _neg_dual(trial, zt, ga[todo], ya[todo], la[todo], A, c)
                ok = val <= base[todo] + 1e-4 * step[todo] * slope[todo] + 1e-14 * np.abs(base[todo])
                w[a[todo[ok]]] = trial[ok]
                todo = todo[~ok]
                if todo.size == 0:
                    break
                step[todo] *= 0.5
            # rows without descent at machine precision keep their point and stop
            active = np.delete(a, todo)
        return _dual_primal(g, w, A, c)

    def lagrangian_fista(self, g, idx, lam, z0):
        """FISTA on the Lagrangian, per row.

        Rows are dropped from the batch as soon as their own iterates settle.
        """
        inner = self.cfg.inner
        A, c = self.A, self.c
        y, M = self.y[idx], self.mask[idx]
        step = (1.0 / (inner.step_safety * (1.0 / c + 2.0 * lam * self.lipschitz[idx])))[:, None]
        lam2 = 2.0 * lam[:, None]
        x = np.array(z0, dtype=float)
        z = x.copy()
        t = np.ones((x.shape[0], 1))
        active = np.arange(x.shape[0])
        for _ in range(inner.max_iter):
            if active.size == 0:
                break
            a = active
            za, xa = z[a], x[a]
            grad = (za - g[a]) / c + lam2[a] * ((((za @ A.T) - y[a]) * M[a]) @ A)
            x_new = shrink(za - step[a] * grad, step[a])
            # gradient-based momentum restart, row by row
            ta = t[a]
            ta[np.einsum("ij,ij->i", za - x_new, x_new - xa) > 0] = 1.0
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ta * ta))
            delta = x_new - xa
            z[a] = x_new + ((ta - 1.0) / t_new) * delta
            x[a] = x_new
            t[a] = t_new
            dn = np.sqrt(np.einsum("ij,ij->i", delta, delta))
            xn = np.sqrt(np.einsum("ij,ij->i", x_new, x_new))
            active = a[dn > inner.tol * (1.0 + xn)]
        return x

    def _infeasible(self, rows, todo):
        loc = divmod(int(todo[rows[0]]), self.shape[1])
        return ConstraintInfeasible(f"patch constraint at location {loc} cannot be met",
                                    location=loc)

    def __call__(self, anchors, locations=None, lam_hint=None, z_hint=None):
        """Proximal points on the stripes of ``locations`` (default: all).

        ``anchors`` holds one stripe vector per requested location. Returns the
        proximal stripes and the multiplier used for each (0 when plain
        soft-thresholding is already feasible).

        Without hints the multiplier bracket starts at ``lambda_start`` and
        grows by ``growth``. ``lam_hint`` (e.g. the multipliers of the previous
        outer iteration) starts the search at the hinted value instead,
        with a bracket factor of 1.1 that squares on every expansion, and ``z_hint`` warm-starts the first Lagrangian solve.
        A feasible solution whose constraint is active to within ``feas_tol``
        ends the search for its row early.
        """
        cfg = self.cfg
        if locations is None:
            locations = np.arange(anchors.shape[0])
        locations = np.asarray(locations)
        out = shrink(anchors, self.c)
        lam_star = np.zeros(locations.size)
        pending = np.flatnonzero(~self.feasible(out, locations))
        if pending.size == 0:
            return out, lam_star
        todo = locations[pending]
        g = anchors[pending]
        tol_abs = cfg.feas_tol * np.maximum(self.T[todo], EPS)
        current = out[pending] if z_hint is None else np.array(z_hint, dtype=float)[pending]
        best = np.empty_like(current)
        lo = np.zeros(todo.size)
        hi = np.full(todo.size, cfg.lambda_start)
        factor = np.full(todo.size, cfg.growth)
        if lam_hint is not None:
            hint = np.asarray(lam_hint, dtype=float)[pending]
            warm = hint > 0
            hi[warm] = hint[warm]
            factor[warm] = 1.1
        else:
            warm = np.zeros(todo.size, dtype=bool)
        done = np.zeros(todo.size, dtype=bool)
        # root function of the search: 1/sqrt(res) - 1/sqrt(T), increasing in lam
        root_T = 1.0 / np.sqrt(np.maximum(self.T[todo], EPS))
        f_lo = 1.0 / np.sqrt(np.maximum(self.residual_sq(out[pending], todo), EPS)) - root_T
        f_hi = np.zeros(todo.size)

        def evaluate(rows, lam):
            sol = self.lagrangian_solve(g[rows], todo[rows], lam, current[rows])
            current[rows] = sol
            res = self.residual_sq(sol, todo[rows])
            viol = res - self.T[todo[rows]]
            ok = viol <= tol_abs[rows]
            tight = ok & (viol >= -tol_abs[rows])
            best[rows[ok]] = sol[ok]
            done[rows[tight]] = True
            return ok, 1.0 / np.sqrt(np.maximum(res, EPS)) - root_T[rows]

        # upward phase: grow until the upper end is feasible
        growing = np.ones(todo.size, dtype=bool)
        shrinking = np.zeros(todo.size, dtype=bool)
        first = True
        while np.any(growing):
            rows = np.flatnonzero(growing)
            ok, f = evaluate(rows, hi[rows])
            growing[rows[ok]] = False
            f_hi[rows[ok]] = f[ok]
            if first:
                # hinted rows feasible at the hint still need a lower end
                shrinking[rows[ok & warm[rows]]] = True
                first = False
            bad = rows[~ok]
            lo[bad] = hi[bad]
            f_lo[bad] = f[~ok]
            hi[bad] *= factor[bad]
            factor[bad] = np.where(warm[bad], factor[bad] ** 2, factor[bad])
            if np.any(hi[bad] > cfg.lambda_cap):
                raise self._infeasible(bad[hi[bad] > cfg.lambda_cap], todo)
        # downward phase for hinted rows: shrink until infeasible
        shrinking &= ~done
        while np.any(shrinking):
            rows = np.flatnonzero(shrinking)
            cand = hi[rows] / factor[rows]
            tiny = cand < EPS * cfg.lambda_start
            lo[rows[tiny]] = 0.0
            shrinking[rows[tiny]] = False
            rows, cand = rows[~tiny], cand[~tiny]
            if rows.size == 0:
                break
            ok, f = evaluate(rows, cand)
            hi[rows[ok]], f_hi[rows[ok]] = cand[ok], f[ok]
            lo[rows[~ok]], f_lo[rows[~ok]] = cand[~ok], f[~ok]
            shrinking[rows[~ok]] = False
            factor[rows[ok]] = factor[rows[ok]] ** 2
            shrinking &= ~done
        # bracketed search for the smallest feasible multiplier: false position
        # with the Anderson-Bjorck correction, falling back to bisection
        last_side = np.zeros(todo.size, dtype=int)
        for _ in range(cfg.max_bisect):
            rows = np.flatnonzero((hi - lo > cfg.bisection_tol * hi) & ~done)
            if rows.size == 0:
                break
            a, b, fa, fb = lo[rows], hi[rows], f_lo[rows], f_hi[rows]
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = b - fb * (b - a) / (fb - fa)
            # keep the step strictly inside the bracket so either end can move
            margin = 1e-3 * (b - a)
            cand = np.where(np.isfinite(cand), np.clip(cand, a + margin, b - margin), 0.5 * (a + b))
            ok, f = evaluate(rows, cand)
            up, dn = rows[ok], rows[~ok]
            # Anderson-Bjorck: scale the stale end's value when the same end moves twice
            again_up = up[last_side[up] == 1]
            again_dn = dn[last_side[dn] == -1]
            scale_up = 1.0 - f[ok][last_side[up] == 1] / f_hi[again_up]
            scale_dn = 1.0 - f[~ok][last_side[dn] == -1] / f_lo[again_dn]
            f_lo[again_up] *= np.where(scale_up > 0, scale_up, 0.5)
            f_hi[again_dn] *= np.where(scale_dn > 0, scale_dn, 0.5)
            hi[up], f_hi[up] = cand[ok], f[ok]
            lo[dn], f_lo[dn] = cand[~ok], f[~ok]
            last_side[up], last_side[dn] = 1, -1
        out[pending] = best
        lam_star[pending] = hi
        return out, lam_star


def prox_patch_constraint(code_in, loc, Y, dictionary, T_i, mask=None, cfg=None):
    """Proximal operator of ``||G||_1 / N + indicator_i`` for the patch at ``loc``.

    Returns a full code: soft-thresholding by ``N mu`` outside the stripe of
    ``loc``, the constrained solution on it.
    """
    cfg = cfg or PpxaConfig()
    code_in = np.asarray(code_in, dtype=float)
    H, W, m = code_in.shape
    n = dictionary.n
    thresholds = np.zeros((H, W))
    thresholds[loc] = T_i
    prox = PatchProx(Y, dictionary, ConstraintSpec(thresholds, mask), cfg)
    k = loc[0] * W + loc[1]
    anchor = extract_stripe(code_in, loc, n)[None]
    local, _ = prox(anchor, [k])
    out = shrink(code_in, prox.c)
    inside = scatter_stripe(np.ones(local.shape[1]), loc, code_in.shape, n) > 0
    out[inside] = 0.0
    return out + scatter_stripe(local[0], loc, code_in.shape, n)


@dataclass
class PpxaState:
    """PPXA iterate with the N auxiliary codes stored compactly.

    Outside its own stripe every auxiliary code sees only the l1 term, so all
    of them agree there: ``background`` holds that shared part and
    ``local[i]`` the stripe of auxiliary code ``i``.
    """

    code: np.ndarray
    background: np.ndarray
    local: np.ndarray  # (N, (2n-1)**2 * m)
    multipliers: np.ndarray
    prox_out: np.ndarray | None = None
    iteration: int = 0

    @classmethod
    def zeros(cls, prox, m):
        H, W = prox.shape
        S = (2 * prox.n - 1) ** 2
        return cls(np.zeros((H, W, m)), np.zeros((H, W, m)),
                   np.zeros((H * W, S * m)), np.zeros(H * W))

    def auxiliary(self, i, n):
        """The full auxiliary code of term ``i`` (flat location index)."""
        H, W, m = self.code.shape
        loc = divmod(i, W)
        out = self.background.copy()
        inside = scatter_stripe(np.ones(self.local.shape[1]), loc, out.shape, n) > 0
        out[inside] = 0.0
        return out + scatter_stripe(self.local[i], loc, out.shape, n)


def ppxa_step(state, prox):
    """One relaxed PPXA iteration; updates ``state`` in place and returns the aggregate.

    The aggregate is the uniform average of the N term proxes; every term
    shrinks the shared background outside its stripe, so the average is
    ``((N - S) shrink(B, c) + sum_i S_i^T local_i) / N``.
    """
    n = prox.n
    H, W, m = state.code.shape
    N = H * W
    S = (2 * n - 1) ** 2
    rho = prox.cfg.relaxation
    bg = shrink(state.background, prox.c)
    if state.prox_out is None:
        local, state.multipliers = prox(state.local)
    else:
        local, state.multipliers = prox(state.local, lam_hint=state.multipliers,
                                        z_hint=state.prox_out)
    state.prox_out = local
    agg = ((N - S) * bg + scatter_stripes(local.reshape(H, W, S, m), n)) / N
    reflect = 2.0 * agg - state.code
    state.background = state.background + rho * (reflect - bg)
    state.local = state.local + rho * (extract_stripes(reflect, n).reshape(N, -1) - local)
    state.code = state.code + rho * (agg - state.code)
    state.iteration += 1
    return agg


def max_relative_violation(Y, code, dictionary, spec, theta=0.0):
    """``max_i (||mask (Omega_theta S_i G - R_i Y)||^2 - T_i) / max(T_i, eps)``."""
    cfg = PpxaConfig(theta=theta)
    prox = PatchProx(Y, dictionary, spec, cfg)
    return prox.max_relative_violation(code)


def exact_code(target, dictionary):
    """Needles ``D_l^+ R_i target / n^2`` at every location.

    When the atoms span all ``n x n`` patches this code synthesizes ``target``
    exactly and meets every patch constraint on ``target`` with zero error,
    for any ``theta``.
    """
    n = dictionary.n
    patches = extract_patches(np.asarray(target, dtype=float), n)
    return patches @ np.linalg.pinv(dictionary.matrix).T / (n * n)


def _constraint_map(prox, n, support):
    """Stacked patch residual operator restricted to ``support`` and its adjoint."""
    H, W = prox.shape
    N = H * W
    A, M = prox.A, prox.mask

    def forward(delta):
        return (extract_stripes(delta * support, n).reshape(N, -1) @ A.T) * M

    def adjoint(res):
        back = ((res * M) @ A).reshape(H, W, -1, support.shape[-1])
        return scatter_stripes(back, n) * support

    return forward, adjoint


def _blend_factor(res0, res1, T):
    """Smallest ``t`` in [0, 1] with ``||(1 - t) r0 + t r1||^2 <= T`` for every row, or None."""
    d = res1 - res0
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", res0, d)
    qc = np.einsum("ij,ij->i", res0, res0) - T
    over = qc > 0
    if not np.any(over):
        return 0.0
    disc = qb[over] ** 2 - 4.0 * qa[over] * qc[over]
    if np.any(disc < 0) or np.any(qa[over] <= 0):
        return None
    roots = (-qb[over] - np.sqrt(disc)) / (2.0 * qa[over])
    t = float(np.max(roots))
    if not 0.0 <= t <= 1.0:
        return None
    r = (1.0 - t) * res0 + t * res1
    if np.any(np.einsum("ij,ij->i", r, r) > T * (1.0 + 1e-9) + EPS):
        return None
    return t


def restore_feasibility(Y, code, dictionary, prox, cg_iters=200):
    """Repair the patch constraints that ``code`` still violates beyond ``feas_tol``.

    First a least-squares correction supported on the nonzeros of ``code``
    (conjugate gradient on the stacked patch residuals) is blended in by the
    smallest factor that satisfies every patch; the zero pattern is kept.
    If that fails, the code is blended with an exactly feasible code (see
    :func:`exact_code`; the anchor keeps ``Y`` on observed pixels and the
    current synthesis on masked ones), which always succeeds when the atoms
    span the patch space. Residuals are affine in the blend factor, so both
    factors are available in closed form. Returns ``(code, how)`` with
    ``how`` in {"none", "support", "exact"}.
    """
    H, W = prox.shape
    n = dictionary.n
    N = H * W
    idx = np.arange(N)
    T = prox.T
    z = extract_stripes(code, n).reshape(N, -1)
    res0 = (z @ prox.A.T - prox.y) * prox.mask
    sq = np.einsum("ij,ij->i", res0, res0)
    if not np.any(sq > T * (1.0 + prox.cfg.feas_tol)):
        return code, "none"
    support = (code != 0).astype(float)
    if np.any(support):
        forward, adjoint = _constraint_map(prox, n, support)
        op = LinearMap(code.shape, lambda d: adjoint(forward(d)))
        try:
            delta = conjugate_gradient(op, -adjoint(res0), tol=1e-12, max_iter=cg_iters).x
        except NumericalFailure:
            delta = None
        if delta is not None:
            t = _blend_factor(res0, res0 + forward(delta), T)
            if t is not None:
                return code + t * delta, "support"
    target = np.asarray(Y, dtype=float)
    if prox.pixel_mask is not None:
        target = np.where(prox.pixel_mask > 0, target, synthesize(dictionary, code))
    anchor = exact_code(target, dictionary)
    over = sq > T
    t = float(np.max(1.0 - np.sqrt(T[over] / sq[over])))
    blended = (1.0 - t) * code + t * anchor
    if prox.max_relative_violation(blended) > 10.0 * prox.cfg.feas_tol:
        logger.warning("feasibility restoration could not meet every patch constraint")
    return blended, "exact"


def solve_l2inf(Y, dictionary, spec, cfg=None, trace=None):
    """Minimize ``||G||_1`` under per-patch error constraints by PPXA.

    After the last iteration any constraint still violated beyond
    ``feas_tol`` is repaired by :func:`restore_feasibility`.

    ``cfg.readout`` picks the returned iterate: ``"average"`` is the PPXA
    average ``G`` itself, which has exact zeros only in the limit;
    ``"sparse"`` is the output of the l1 term's prox, ``shrink(B, c)``, which
    has the same limit but is exactly sparse at every iteration.
    """
    cfg = cfg or PpxaConfig()
    Y = np.asarray(Y, dtype=float)
    prox = PatchProx(Y, dictionary, spec, cfg)
    state = PpxaState.zeros(prox, dictionary.m)
    N = state.local.shape[0]
    idx = np.arange(N)
    converged = False
    viol = np.inf
    for _ in range(cfg.max_outer):
        previous = state.code
        ppxa_step(state, prox)
        change = float(np.linalg.norm(state.code - previous))
        z = extract_stripes(state.code, prox.n).reshape(N, -1)
        viol = float((prox.violation(z, idx) / np.maximum(prox.T, EPS)).max())
        if trace is not None:
            trace.append(IterRecord(state.iteration, float(np.abs(state.code).sum()),
                                    max(viol, 0.0), change))
        if (change <= cfg.tol * (1.0 + float(np.linalg.norm(state.code)))
                and viol <= cfg.feas_tol):
            converged = True
            break
    if not converged:
        warnings.warn(f"PPXA stopped at max_outer={cfg.max_outer} "
                      f"(relative violation {viol:.3g})", ConvergenceWarning, stacklevel=2)
    result = state.code if cfg.readout == "average" else shrink(state.background, prox.c)
    code, how = restore_feasibility(Y, result, dictionary, prox)
    if how != "none":
        logger.info("PPXA: feasibility restored (%s correction)", how)
    return code


def reconstruct_denoise(Y, code, dictionary, lam):
    """Closed-form image update ``(lam Y + n^2 D G) / (lam + n^2)``."""
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    n2 = dictionary.n ** 2
    return (lam * np.asarray(Y, dtype=float) + n2 * synthesize(dictionary, code)) / (lam + n2)
