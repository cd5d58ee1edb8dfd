"""Monte Carlo simulation of the jump-diffusion and Asian payoff estimation.

Paths are generated in fixed-size blocks. Block ``i`` draws from its own
generator seeded by ``SeedSequence(seed, spawn_key=(i,))`` and results are
concatenated in block order, so output does not depend on the worker count.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .asymptotics import averaged_forward, growth_rate, parity_gap
from .model import ModelParams, OptionKind, OptionSpec, PriceEstimate, ValidationError
from .subordinator import sample_increments

THREADS_ENV = "ASIAN_ASYM_THREADS"
AVERAGE_RULES = ("trapezoid", "left")


def default_steps(T: float) -> int:
    return max(16, math.ceil(252 * T - 1e-9))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    return max(1, int(threads))


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int | None = None
    seed: int = 0
    antithetic: bool = False
    average: str = "trapezoid"
    control_variate: bool = False
    threads: int | None = None
    block_size: int = 8192

    def check(self) -> McConfig:
        if self.n_paths < 2:
            raise ValidationError("n_paths >= 2 required")
        if self.n_steps is not None and self.n_steps < 1:
            raise ValidationError("n_steps >= 1 required")
        if self.average not in AVERAGE_RULES:
            raise ValidationError(f"average must be one of {AVERAGE_RULES}")
        if self.block_size < 2 or self.block_size % 2:
            raise ValidationError("block_size must be an even number >= 2")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("antithetic sampling needs an even n_paths")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        return self

    def steps_for(self, T: float) -> int:
        return self.n_steps if self.n_steps is not None else default_steps(T)

    def with_(self, **changes) -> McConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class PathBatch:
    averages: np.ndarray
    log_terminal: np.ndarray
    brownian_terminal: np.ndarray  # driftless Gaussian part W_T, before any tilt
    T: float
    n_steps: int
    antithetic: bool

    @property
    def n_paths(self) -> int:
        return self.averages.size


def _time_weights(n: int, rule: str) -> np.ndarray:
    """Unnormalized weights of S(t_0..t_n); the average divides the sum by n.

    Dividing after summation keeps a constant path exactly constant.
    """
    w = np.ones(n + 1)
    if rule == "trapezoid":
        w[0] = w[-1] = 0.5
    else:
        w[-1] = 0.0
    return w


def discrete_mean(params: ModelParams, T: float, n_steps: int, rule: str) -> float:
    """Exact expectation of the discretized average (1/n) sum w_k S(t_k)."""
    m = growth_rate(params)
    t = np.linspace(0.0, T, n_steps + 1)
    return float(params.s0 * (np.dot(_time_weights(n_steps, rule), np.exp(m * t)) / n_steps))


def _simulate_block(params, T, n, rule, antithetic, tilt, seed, index, size):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    dt = T / n
    half = size // 2 if antithetic else size
    gauss = rng.standard_normal((half, n))
    spec = params.subordinator
    if spec.has_jumps and params.rho != 0.0:
        jumps = sample_increments(spec, params.lam, dt, (half, n), rng)
    else:
        jumps = None
    if antithetic:
        gauss = np.stack((gauss, -gauss), axis=1).reshape(size, n)
        if jumps is not None:
            jumps = np.repeat(jumps, 2, axis=0)

    sq = math.sqrt(dt)
    drift = (params.r - params.q) * dt
    if jumps is None:
        # sampled increments already carry the subordinator drift
        drift += params.rho * spec.b * params.lam * dt
    x = gauss * (params.sigma * sq)
    x += drift + params.sigma * tilt * dt
    if jumps is not None:
        x += params.rho * jumps
    np.cumsum(x, axis=1, out=x)
    w = _time_weights(n, rule)
    s = np.exp(x)
    rel = (w[0] + s @ w[1:]) / n
    averages = params.s0 * rel
    log_terminal = math.log(params.s0) + x[:, -1]
    brownian = sq * gauss.sum(axis=1)
    return averages, log_terminal, brownian


def simulate_averages(
    params: ModelParams, T: float, cfg: McConfig, tilt: float = 0.0
) -> PathBatch:
    """Simulate discretized arithmetic averages of S over [0, T].

    The log-price uses exact increments
    ``(r - q) dt + sigma (sqrt(dt) N + tilt dt) + rho dZ``, so the only
    discretization error comes from the averaging rule. ``tilt`` adds a
    Brownian drift for importance sampling; ``brownian_terminal`` holds the
    untilted W_T needed for the likelihood ratio.
    """
    params.check()
    cfg.check()
    if not T > 0.0:
        raise ValidationError(f"maturity must be positive, got {T}")
    n = cfg.steps_for(T)
    bs = cfg.block_size
    sizes = [bs] * (cfg.n_paths // bs)
    if cfg.n_paths % bs:
        sizes.append(cfg.n_paths % bs)
    tasks = [
        (params, T, n, cfg.average, cfg.antithetic, tilt, cfg.seed, i, size)
        for i, size in enumerate(sizes)
    ]
    workers = min(resolve_threads(cfg.threads), len(tasks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _simulate_block(*a), tasks))
    else:
        parts = [_simulate_block(*a) for a in tasks]
    arrays = [np.concatenate(col) for col in zip(*parts)]
    for arr in arrays:
        arr.flags.writeable = False
    return PathBatch(*arrays, T=T, n_steps=n, antithetic=cfg.antithetic)


def likelihood_ratio(batch: PathBatch, tilt: float) -> np.ndarray | None:
    if tilt == 0.0:
        return None
    return np.exp(-tilt * batch.brownian_terminal - 0.5 * tilt * tilt * batch.T)


def _mean_stderr(values: np.ndarray, paired: bool) -> tuple[float, float]:
    if paired:
        values = values.reshape(-1, 2).mean(axis=1)
    n = values.size
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def _payoff(averages: np.ndarray, K: float, kind: OptionKind) -> np.ndarray:
    if kind is OptionKind.CALL:
        return np.maximum(averages - K, 0.0)
    return np.maximum(K - averages, 0.0)


def price_asian(
    params: ModelParams, option: OptionSpec, cfg: McConfig, tilt: float = 0.0
) -> PriceEstimate:
    """Discounted Monte Carlo price of a fixed-strike arithmetic Asian option.

    With ``cfg.control_variate`` the simulated average is used as a control
    with coefficient +1 (call) or -1 (put), i.e. the price is estimated as the
    exact parity gap plus the Monte Carlo value of the opposite option.
    """
    option.check()
    T, K = option.maturity, option.strike
    batch = simulate_averages(params, T, cfg, tilt)
    y = _payoff(batch.averages, K, option.kind)
    lr = likelihood_ratio(batch, tilt)
    if lr is not None:
        y = y * lr
    if cfg.control_variate:
        control = batch.averages if lr is None else batch.averages * lr
        sign = 1.0 if option.kind is OptionKind.CALL else -1.0
        y = y - sign * (control - discrete_mean(params, T, batch.n_steps, cfg.average))
    mean, se = _mean_stderr(y, batch.antithetic)
    disc = math.exp(-params.r * T)
    return PriceEstimate(disc * mean, disc * se, batch.n_paths, batch.n_steps, cfg.seed)


@dataclass(frozen=True)
class ParityCheck:
    call: float
    put: float
    lhs: float
    rhs: float
    stderr: float
    z_score: float


def parity_check(params: ModelParams, K: float, T: float, cfg: McConfig) -> ParityCheck:
    """Compare C_MC - P_MC on common paths with exp(-rT) (A(T) - K)."""
    batch = simulate_averages(params, T, cfg)
    disc = math.exp(-params.r * T)
    call = _payoff(batch.averages, K, OptionKind.CALL)
    put = _payoff(batch.averages, K, OptionKind.PUT)
    c, _ = _mean_stderr(call, batch.antithetic)
    p, _ = _mean_stderr(put, batch.antithetic)
    diff, se = _mean_stderr(call - put, batch.antithetic)
    lhs, se = disc * diff, disc * se
    rhs = parity_gap(params, K, T)
    if se > 0.0:
        z = (lhs - rhs) / se
    else:
        z = 0.0 if math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12) else math.copysign(math.inf, lhs - rhs)
    return ParityCheck(disc * c, disc * p, lhs, rhs, se, z)


def auto_tilt(params: ModelParams, K: float, T: float) -> float:
    """Brownian drift that moves the mean log-average to log(K/S0).

    With drift ``sigma * theta`` added to X the time-averaged log-price shifts
    by ``sigma * theta * T / 2``.
    """
    return 2.0 * math.log(K / params.s0) / (params.sigma * T)


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    stderr: float
    tilt_used: float
    hits: int
    ess: float
    upper: bool


MIN_ESS_FRACTION = 0.01


def tail_probability(
    params: ModelParams,
    K: float,
    T: float,
    cfg: McConfig,
    tilt: float | None = None,
    *,
    upper: bool = True,
    auto: bool = False,
) -> TailEstimate:
    """Estimate P(average >= K) (or P(average <= K) when ``upper`` is false).

    A supplied ``tilt`` shifts the Brownian drift and reweights paths with the
    exact Gaussian likelihood ratio; jumps are never tilted. ``auto=True``
    picks :func:`auto_tilt` and falls back to plain sampling if the effective
    sample size drops below 1% of the paths.
    """
    if not K > 0.0:
        raise ValidationError("tail probability needs K > 0")
    if auto and tilt is None:
        tilt = auto_tilt(params, K, T)
    theta = float(tilt or 0.0)
    batch = simulate_averages(params, T, cfg, theta)
    lr = likelihood_ratio(batch, theta)
    hit = batch.averages >= K if upper else batch.averages <= K
    y = hit.astype(float)
    if lr is not None:
        y *= lr
    # effective number of summands carrying the estimate
    ss = float(np.dot(y, y))
    ess = float(y.sum() ** 2 / ss) if ss > 0.0 else 0.0
    if auto and lr is not None and ess < MIN_ESS_FRACTION * batch.n_paths:
        return tail_probability(params, K, T, cfg, 0.0, upper=upper)
    p, se = _mean_stderr(y, batch.antithetic)
    hits = int(hit.sum())
    if hits == 0:
        warnings.warn(f"no path reached the tail event at K={K}, T={T}", RuntimeWarning, stacklevel=2)
    return TailEstimate(p, se, theta, hits, ess, upper)


def mean_average_check(params: ModelParams, T: float, cfg: McConfig) -> tuple[float, float, float]:
    """(sample mean of averages, its stderr, A(T)) for unbiasedness checks."""
    batch = simulate_averages(params, T, cfg)
    mean, se = _mean_stderr(np.asarray(batch.averages), batch.antithetic)
    return mean, se, averaged_forward(params, T)
