"""Closed-form short-maturity quantities for fixed-strike arithmetic Asian options.

The expected price grows as ``E[S_t] = S0 exp(m t)`` with

    m = (r - q) + sigma^2 / 2 + jump_growth.

For the model, ``jump_growth = log E[exp(rho Z_lambda)] = -jump_constant_C``.
Every function accepts an explicit ``jump_growth`` so a fitted constant (as in
calibration) can be plugged in directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import ModelParams, OptionKind, SubordinatorSpec, ValidationError
from .subordinator import jump_constant_C, jump_moment1

SERIES_CUTOFF = 1e-6
MARTINGALE_TOL = 1e-8


def model_jump_growth(params: ModelParams) -> float:
    return -jump_constant_C(params)


def growth_rate(params: ModelParams, jump_growth: float | None = None) -> float:
    params.check()
    if jump_growth is None:
        jump_growth = model_jump_growth(params)
    return params.r - params.q + 0.5 * params.sigma**2 + jump_growth


def mean_growth_factor(m: float, T: float) -> float:
    """(exp(m T) - 1) / (m T), the average of exp(m t) over [0, T]."""
    x = m * T
    if abs(x) < SERIES_CUTOFF:
        return 1.0 + x / 2.0 + x * x / 6.0
    return math.expm1(x) / x


def expected_average(s0: float, m: float, T: float) -> float:
    if not T > 0.0:
        raise ValidationError(f"maturity must be positive, got {T}")
    return s0 * mean_growth_factor(m, T)


def averaged_forward(params: ModelParams, T: float, *, jump_growth: float | None = None) -> float:
    """A(T) = (1/T) int_0^T E[S_t] dt."""
    return expected_average(params.s0, growth_rate(params, jump_growth), T)


def parity_gap(
    params: ModelParams, K: float, T: float, *, jump_growth: float | None = None
) -> float:
    """C(K, T) - P(K, T) = exp(-r T) (A(T) - K)."""
    return math.exp(-params.r * T) * (averaged_forward(params, T, jump_growth=jump_growth) - K)


@dataclass(frozen=True)
class ItmExpansion:
    price: float
    intrinsic: float
    carry: float
    convexity: float
    kind: OptionKind
    order: str = "O(T^2)"


def itm_expansion(
    params: ModelParams,
    K: float,
    T: float,
    kind: OptionKind | str,
    *,
    jump_growth: float | None = None,
) -> ItmExpansion:
    """First-order short-maturity price of an in-the-money Asian option.

    Call (K < S0):  S0 - K + r K T + S0 T (sigma^2/2 + C - q)^2 / (2 m)
    Put  (K > S0):  K - S0 - r K T - S0 T (sigma^2/2 + C - q)^2 / (2 m)

    with ``C`` the jump growth and ``m`` the full growth rate. The first-order
    term coincides with the Taylor expansion of the parity gap only when r = 0.
    """
    kind = OptionKind.parse(kind)
    s0 = params.s0
    if not T >= 0.0:
        raise ValidationError(f"maturity must be nonnegative, got {T}")
    if kind is OptionKind.CALL and not K < s0:
        raise ValidationError("in-the-money call requires K < S0")
    if kind is OptionKind.PUT and not K > s0:
        raise ValidationError("in-the-money put requires K > S0")
    if jump_growth is None:
        jump_growth = model_jump_growth(params)
    m = growth_rate(params, jump_growth)
    if m == 0.0:
        raise ZeroDivisionError(
            "ITM expansion is singular: (r - q) + sigma^2/2 + C vanishes"
        )
    core = 0.5 * params.sigma**2 + jump_growth - params.q
    sign = 1.0 if kind is OptionKind.CALL else -1.0
    intrinsic = sign * (s0 - K)
    carry = sign * params.r * K * T
    convexity = sign * s0 * T * core**2 / (2.0 * m)
    return ItmExpansion(intrinsic + carry + convexity, intrinsic, carry, convexity, kind)


@dataclass(frozen=True)
class AtmBounds:
    lower: float
    upper: float
    T: float
    omega: float
    sigma_bar_prime: float
    remainder: str = "O(T)"
    warnings: tuple[str, ...] = field(default=())

    @property
    def ordered(self) -> bool:
        return self.lower <= self.upper


def atm_bounds(
    params: ModelParams, T: float, sigma_bar_prime: float | None = None
) -> AtmBounds:
    """Leading-order bracket of the at-the-money call/put price.

    lower = sigma S0 sqrt(T / (6 pi))
    upper = (1/3) sigma S0 sqrt(2 T / pi) + (T/4) (sigma_bar' - omega lambda) S0

    ``sigma_bar'`` defaults to ``lambda * omega`` (the compensator value), which
    zeroes the linear term. Both bounds hold up to O(T).
    """
    params.check()
    if not T > 0.0:
        raise ValidationError(f"maturity must be positive, got {T}")
    s0, sig, lam = params.s0, params.sigma, params.lam
    omega = jump_moment1(params.subordinator, params.rho)
    sbp = lam * omega if sigma_bar_prime is None else float(sigma_bar_prime)
    lower = sig * s0 * math.sqrt(T / (6.0 * math.pi))
    upper = sig * s0 * math.sqrt(2.0 * T / math.pi) / 3.0 + 0.25 * T * (sbp - omega * lam) * s0

    notes = []
    residual = 0.5 * sig**2 + lam * omega
    if abs(residual) > MARTINGALE_TOL * max(1.0, sig**2):
        notes.append(f"martingale condition violated: sigma^2/2 + lambda*omega = {residual:.3g}")
    if sbp >= 0.0 and omega < 0.0:
        notes.append("sigma_bar' >= 0 conflicts with the negative jump drift of the martingale regime")
    elif sbp < 0.0:
        notes.append("sigma_bar' < 0 although the bound is stated for sigma_bar' > 0")
    if lower > upper:
        notes.append("lower bound exceeds upper bound")
    return AtmBounds(lower, upper, T, omega, sbp, warnings=tuple(notes))


def martingale_lambda(sigma: float, rho: float, spec: SubordinatorSpec) -> float:
    """Clock speed solving sigma^2/2 + lambda * omega_tilde = 0."""
    omega = jump_moment1(spec, rho)
    if not omega < 0.0:
        raise ValidationError(
            "no positive clock speed makes the discounted price a martingale: "
            f"needs int (rho^2 x^2/2 + rho x) nu(dx) < 0, got {omega}"
        )
    return -(sigma**2) / (2.0 * omega)


def otm_asymptotic_price(rate: float, T: float) -> float:
    """Leading-order price scale exp(-I/T) of an out-of-the-money option."""
    if rate < 0.0:
        raise ValidationError(f"rate function value must be nonnegative, got {rate}")
    if not T > 0.0:
        raise ValidationError(f"maturity must be positive, got {T}")
    return math.exp(-rate / T)
