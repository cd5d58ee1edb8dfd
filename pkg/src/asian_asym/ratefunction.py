"""Large-deviation rate functions for the short-maturity arithmetic average.

The path cost is ``int_0^1 g*(phi'(t)) dt`` where ``g*`` is the Legendre
transform of the log-price cumulant ``g``. The rate of the average is the
cheapest path, started at ``log S0``, whose average ``int_0^1 exp(phi)``
equals ``K``. Paths are piecewise linear on a uniform grid and the average
uses the trapezoid rule; the equality constraint is handled with an augmented
Lagrangian whose inner problems are solved by L-BFGS.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from .model import ModelParams, OptionKind, OptionSpec, ValidationError
from .montecarlo import McConfig, auto_tilt, price_asian, tail_probability
from .subordinator import CumulantParams, cumulant_derivs


class BoundarySupremumWarning(RuntimeWarning):
    """The Legendre supremum sits at the edge of the cumulant's finite domain."""


class InsufficientSamplingError(RuntimeError):
    """No Monte Carlo path reached the tail event at any maturity."""


_MAX_EXPAND = 200
_MAX_NEWTON = 100


def _legendre_vec(cp: CumulantParams, alpha: np.ndarray):
    """Vectorized sup_xi (alpha xi - g(xi)); returns (gstar, xi_star, at_boundary)."""
    alpha = np.asarray(alpha, dtype=float)
    lo_dom, hi_dom = cp.xi_min, cp.xi_max
    _, d0, c0 = cumulant_derivs(cp, 0.0)
    if c0 <= 0.0:
        raise ValidationError("cumulant is not strictly convex at 0; Legendre transform degenerate")
    guess = (alpha - d0) / c0
    width = (hi_dom if math.isfinite(hi_dom) else 0.0) - (lo_dom if math.isfinite(lo_dom) else 0.0)
    edge = 1e-9 * width if width > 0 else 0.0
    if math.isfinite(lo_dom):
        guess = np.maximum(guess, 0.5 * lo_dom)
    if math.isfinite(hi_dom):
        guess = np.minimum(guess, 0.5 * hi_dom)

    boundary = np.zeros(alpha.shape, dtype=bool)

    # bracket [lo, hi] with g'(lo) <= alpha <= g'(hi)
    hi = np.maximum(guess, 0.0) + 1.0
    if math.isfinite(hi_dom):
        hi = np.minimum(hi, hi_dom - (hi_dom - np.maximum(guess, 0.0)) / 2)
    for _ in range(_MAX_EXPAND):
        need = cumulant_derivs(cp, hi)[1] < alpha
        if not need.any():
            break
        if math.isfinite(hi_dom):
            nxt = hi_dom - (hi_dom - hi) / 4.0
            stuck = need & (hi_dom - nxt <= edge)
            boundary |= stuck
            hi = np.where(need & ~stuck, nxt, np.where(stuck, hi_dom - edge, hi))
            if stuck.all() or not (need & ~stuck).any():
                break
        else:
            hi = np.where(need, 2.0 * np.abs(hi) + 1.0, hi)
    lo = np.minimum(guess, 0.0) - 1.0
    if math.isfinite(lo_dom):
        lo = np.maximum(lo, lo_dom + (np.minimum(guess, 0.0) - lo_dom) / 2)
    for _ in range(_MAX_EXPAND):
        need = cumulant_derivs(cp, lo)[1] > alpha
        if not need.any():
            break
        if math.isfinite(lo_dom):
            nxt = lo_dom + (lo - lo_dom) / 4.0
            stuck = need & (nxt - lo_dom <= edge)
            boundary |= stuck
            lo = np.where(need & ~stuck, nxt, np.where(stuck, lo_dom + edge, lo))
            if stuck.all() or not (need & ~stuck).any():
                break
        else:
            lo = np.where(need, -2.0 * np.abs(lo) - 1.0, lo)

    x = np.clip(guess, lo, hi)
    for _ in range(_MAX_NEWTON):
        _, g1, g2 = cumulant_derivs(cp, x)
        f = g1 - alpha
        lo = np.where(f < 0.0, x, lo)
        hi = np.where(f > 0.0, x, hi)
        step = x - f / g2
        inside = (step > lo) & (step < hi)
        nxt = np.where(inside, step, 0.5 * (lo + hi))
        done = (np.abs(f) <= 1e-14 * (1.0 + np.abs(alpha))) | (np.abs(nxt - x) <= 1e-15 * (1.0 + np.abs(x)))
        x = np.where(done, x, nxt)
        if done.all():
            break
    g0 = cumulant_derivs(cp, x)[0]
    # g(0) = 0 makes g* >= 0; clip round-off below zero
    gstar = np.maximum(alpha * x - g0, 0.0)
    return gstar, x, boundary


def legendre(cp: CumulantParams, alpha: float) -> tuple[float, float]:
    """Legendre transform ``g*(alpha)`` and its maximizer ``xi*``.

    ``d g*/d alpha = xi*`` (envelope theorem). A
    :class:`BoundarySupremumWarning` is emitted when the maximizer had to be
    clamped to the edge of the finite domain of ``g``.
    """
    gs, xs, bd = _legendre_vec(cp, np.array([alpha], dtype=float))
    if bd[0]:
        warnings.warn(f"supremum for alpha={alpha} clamped to the domain edge", BoundarySupremumWarning, stacklevel=2)
    return float(gs[0]), float(xs[0])


@dataclass(frozen=True)
class LegendreTable:
    alpha: np.ndarray
    gstar: np.ndarray
    xi_star: np.ndarray
    at_boundary: np.ndarray


def legendre_table(cp: CumulantParams, alphas: Sequence[float]) -> LegendreTable:
    a = np.asarray(alphas, dtype=float)
    gs, xs, bd = _legendre_vec(cp, a)
    if bd.any():
        warnings.warn(f"{int(bd.sum())} suprema clamped to the domain edge", BoundarySupremumWarning, stacklevel=2)
    return LegendreTable(a, gs, xs, bd)


@dataclass(frozen=True)
class OptimizerConfig:
    n_knots: int = 16
    rel_tol: float = 1e-3
    max_outer: int = 40
    max_knots: int = 512
    ctol: float = 1e-8
    penalty0: float = 1.0
    penalty_growth: float = 10.0
    include_jumps: bool = False
    max_inner: int = 5000

    def check(self) -> OptimizerConfig:
        if self.n_knots < 8:
            raise ValidationError("n_knots >= 8 required")
        if self.max_knots < self.n_knots:
            raise ValidationError("max_knots must be >= n_knots")
        if not self.rel_tol > 0.0:
            raise ValidationError("rel_tol must be positive")
        if self.max_outer < 1:
            raise ValidationError("max_outer >= 1 required")
        return self


@dataclass(frozen=True)
class RateResult:
    value: float
    path: np.ndarray  # shape (n_knots + 1, 2): columns t, phi(t)
    multiplier: float
    converged: bool
    iterations: int
    n_knots: int
    residual: float
    terminal_gradient: float
    history: tuple[tuple[int, float], ...] = field(default=())
    include_jumps: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "multiplier": self.multiplier,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_knots": self.n_knots,
            "residual": self.residual,
            "terminal_gradient": self.terminal_gradient,
            "include_jumps": self.include_jumps,
            "history": [list(h) for h in self.history],
        }


class _PathProblem:
    """Discretized path cost and average constraint in psi = phi - log S0."""

    def __init__(self, cp: CumulantParams, ratio: float, n: int):
        self.cp = cp
        self.ratio = ratio
        self.n = n
        w = np.ones(n)
        w[-1] = 0.5
        self.w = w / n  # weights of psi_1..psi_n; psi_0 = 0 carries 0.5/n

    def cost(self, u: np.ndarray):
        slopes = np.diff(np.concatenate(([0.0], u))) * self.n
        gs, xs, _ = _legendre_vec(self.cp, slopes)
        grad = xs.copy()
        grad[:-1] -= xs[1:]
        return float(gs.sum() / self.n), grad

    def constraint(self, u: np.ndarray):
        e = np.exp(u)
        avg = 0.5 / self.n + float(np.dot(self.w, e))
        return avg / self.ratio - 1.0, self.w * e / self.ratio

    def lagrangian(self, u, mu, c):
        f, gf = self.cost(u)
        h, gh = self.constraint(u)
        return f - mu * h + 0.5 * c * h * h, gf + (c * h - mu) * gh


def _solve_fixed(problem: _PathProblem, u0: np.ndarray, opt: OptimizerConfig):
    u = u0.copy()
    mu, c = 0.0, opt.penalty0
    h_prev = math.inf
    iterations = 0
    converged = False
    for _ in range(opt.max_outer):
        res = optimize.minimize(
            problem.lagrangian,
            u,
            args=(mu, c),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opt.max_inner, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 30},
        )
        u = res.x
        iterations += 1
        h, _ = problem.constraint(u)
        if abs(h) <= opt.ctol:
            mu = mu - c * h
            converged = True
            break
        mu -= c * h
        if abs(h) > 0.25 * h_prev:
            c *= opt.penalty_growth
        h_prev = abs(h)
    h, _ = problem.constraint(u)
    _, g = problem.lagrangian(u, mu, 0.0)
    return u, mu, converged, iterations, h, float(g[-1])


def rate_function(
    params: ModelParams,
    K: float,
    S0: float | None = None,
    n_knots: int | None = None,
    opt: OptimizerConfig | None = None,
    *,
    refine: bool = True,
) -> RateResult:
    """Rate function I(K, S0) of the short-maturity arithmetic average.

    Drift is always excluded from the cumulant, so the result does not depend
    on r and q. Jumps enter only with ``opt.include_jumps``. The grid starts at
    ``n_knots`` intervals and doubles until successive values agree to
    ``opt.rel_tol`` (relative); ``refine=False`` solves on the first grid only.
    """
    opt = (opt or OptimizerConfig()).check()
    params.check()
    S0 = params.s0 if S0 is None else float(S0)
    if not (K > 0.0 and S0 > 0.0):
        raise ValidationError("rate function needs K > 0 and S0 > 0")
    n = opt.n_knots if n_knots is None else int(n_knots)
    if n < 8:
        raise ValidationError("n_knots >= 8 required")
    cp = CumulantParams.from_params(params, include_drift=False, include_jumps=opt.include_jumps)
    ratio = K / S0
    target = math.log(ratio)
    u = target * np.arange(1, n + 1) / n
    history: list[tuple[int, float]] = []
    total_iter = 0
    prev = None
    all_converged = True
    refined = False
    while True:
        problem = _PathProblem(cp, ratio, n)
        u, mu, conv, it, h, tg = _solve_fixed(problem, u, opt)
        value = problem.cost(u)[0]
        total_iter += it
        all_converged = all_converged and conv
        history.append((n, value))
        if not refine:
            refined = True
            break
        if prev is not None and abs(value - prev) <= opt.rel_tol * max(abs(value), 1e-300):
            refined = True
            break
        if prev is not None and value == prev == 0.0:
            refined = True
            break
        if 2 * n > opt.max_knots:
            break
        prev = value
        # warm start on the doubled grid
        fine = np.empty(2 * n)
        fine[1::2] = u
        fine[0::2] = 0.5 * (np.concatenate(([0.0], u[:-1])) + u)
        u, n = fine, 2 * n
    t = np.linspace(0.0, 1.0, n + 1)
    phi = math.log(S0) + np.concatenate(([0.0], u))
    return RateResult(
        value=value,
        path=np.column_stack((t, phi)),
        multiplier=mu,
        converged=bool(conv and refined),
        iterations=total_iter,
        n_knots=n,
        residual=h,
        terminal_gradient=tg,
        history=tuple(history),
        include_jumps=opt.include_jumps,
    )


def rate_on_grid(
    params: ModelParams, K: float, n_knots: int, opt: OptimizerConfig | None = None
) -> RateResult:
    """Solve on a single fixed grid of ``n_knots`` intervals (no refinement)."""
    opt = opt or OptimizerConfig()
    opt = replace(opt, n_knots=n_knots, max_knots=max(n_knots, opt.max_knots))
    return rate_function(params, K, n_knots=n_knots, opt=opt, refine=False)


@dataclass(frozen=True)
class EmpiricalRate:
    T: np.ndarray
    minus_T_logP: np.ndarray
    stderr: np.ndarray
    p_hat: np.ndarray
    extrapolated: float
    monotone_ok: bool
    excluded: int
    quantity: str = "probability"


EXTRAPOLATIONS = ("tlogt", "linear")


def _intercept(T: np.ndarray, y: np.ndarray, form: str) -> float:
    """Value at T = 0 of a least-squares fit of y against T.

    ``tlogt`` fits ``I + a T log T + b T``, the form produced by a power-law
    prefactor T^p in front of exp(-I/T); it needs three points and otherwise
    falls back to ``linear`` (``I + b T``).
    """
    if T.size == 1:
        return float(y[0])
    if form == "tlogt" and T.size >= 3:
        A = np.column_stack((np.ones_like(T), T * np.log(T), T))
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return float(coef[0])
    slope, intercept = np.polyfit(T, y, 1)
    return float(intercept)


def empirical_rate(
    params: ModelParams,
    K: float,
    cfg: McConfig,
    T_grid: Sequence[float],
    *,
    quantity: str = "probability",
    tilt: bool = True,
    upper: bool | None = None,
    extrapolation: str = "tlogt",
) -> EmpiricalRate:
    """Estimate -T log P(average beyond K) (or -T log price) on a decreasing T grid.

    ``extrapolated`` is the T = 0 intercept of a least-squares fit through the
    finite points, of the form chosen by ``extrapolation`` (see :func:`_intercept`). ``monotone_ok`` is true when every successive change either
    keeps one direction or is within three combined standard errors.
    """
    T_arr = np.asarray(T_grid, dtype=float)
    if T_arr.size == 0 or np.any(np.diff(T_arr) >= 0.0) or np.any(T_arr <= 0.0):
        raise ValidationError("T_grid must be positive and strictly decreasing")
    if quantity not in ("probability", "price"):
        raise ValidationError("quantity must be 'probability' or 'price'")
    if extrapolation not in EXTRAPOLATIONS:
        raise ValidationError(f"extrapolation must be one of {EXTRAPOLATIONS}")
    if upper is None:
        upper = K >= params.s0
    # tilting only helps when the event lies against the drift-free center
    rare = (K > params.s0) if upper else (K < params.s0)
    ys, ses, ps = [], [], []
    for i, T in enumerate(T_arr):
        sub = cfg.with_(seed=(cfg.seed + 7919 * i) % 2**64)
        theta = auto_tilt(params, K, T) if tilt and rare else 0.0
        if quantity == "probability":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = tail_probability(params, K, T, sub, theta, upper=upper, auto=tilt)
            p, se = est.p_hat, est.stderr
        else:
            kind = OptionKind.CALL if upper else OptionKind.PUT
            est = price_asian(params, OptionSpec(K, T, kind), sub, tilt=theta)
            p, se = est.mean, est.stderr
        ps.append(p)
        if p > 0.0:
            ys.append(-T * math.log(p) + 0.0)
            ses.append(T * se / p)
        else:
            ys.append(math.nan)
            ses.append(math.nan)
    y = np.array(ys)
    se = np.array(ses)
    ok = np.isfinite(y)
    if not ok.any():
        raise InsufficientSamplingError("no tail hits at any maturity; increase n_paths or tilt")
    extrap = _intercept(T_arr[ok], y[ok], extrapolation)
    yf, sf = y[ok], se[ok]
    d = np.diff(yf)
    noise = 3.0 * np.sqrt(sf[1:] ** 2 + sf[:-1] ** 2)
    significant = d[np.abs(d) > noise]
    monotone = bool(np.all(significant >= 0.0) or np.all(significant <= 0.0))
    return EmpiricalRate(T_arr, y, se, np.array(ps), extrap, monotone, int((~ok).sum()), quantity)
