"""Laplace exponents, jump functionals, cumulants and samplers for subordinators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .model import Family, ModelParams, SubordinatorSpec, ValidationError


def laplace_exponent(spec: SubordinatorSpec, kappa: float) -> float:
    """psi(kappa) = b kappa + int (1 - exp(-kappa x)) nu(dx)."""
    if not kappa >= 0.0:
        raise ValidationError(f"laplace exponent needs kappa >= 0, got {kappa}")
    out = spec.b * kappa
    if spec.family is Family.CPE:
        out += spec.c * kappa / (spec.a + kappa)
    elif spec.family is Family.GAMMA:
        out += spec.c * math.log1p(kappa / spec.a)
    return out


def levy_density(spec: SubordinatorSpec) -> Callable[[float], float]:
    """Density of the Levy measure on (0, inf)."""
    c, a = spec.c, spec.a
    if spec.family is Family.CPE:
        return lambda x: c * a * math.exp(-a * x)
    if spec.family is Family.GAMMA:
        return lambda x: c * math.exp(-a * x) / x
    return lambda x: 0.0


def levy_integral(spec: SubordinatorSpec, f: Callable[[float], float]) -> float:
    """Adaptive quadrature of ``int f(x) nu(dx)`` over (0, inf)."""
    if not spec.has_jumps:
        return 0.0
    dens = levy_density(spec)

    def integrand(x: float) -> float:
        return f(x) * dens(x) if x > 0.0 else 0.0

    # split at the truncation point so the kink of indicator integrands is a node
    total = 0.0
    for lo, hi in ((0.0, 1.0), (1.0, math.inf)):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return total


def laplace_exponent_quad(spec: SubordinatorSpec, kappa: float) -> float:
    """Quadrature route to :func:`laplace_exponent`, used for verification."""
    return spec.b * kappa + levy_integral(spec, lambda x: -math.expm1(-kappa * x))


def raw_moment(spec: SubordinatorSpec, k: int) -> float:
    """int x^k nu(dx) for k >= 1."""
    if not spec.has_jumps:
        return 0.0
    if spec.family is Family.CPE:
        return spec.c * math.factorial(k) / spec.a**k
    return spec.c * math.factorial(k - 1) / spec.a**k


def jump_moment1(spec: SubordinatorSpec, rho: float) -> float:
    """omega_tilde = int (rho^2 x^2 / 2 + rho x) nu(dx)."""
    return 0.5 * rho**2 * raw_moment(spec, 2) + rho * raw_moment(spec, 1)


def jump_moment2(spec: SubordinatorSpec, rho: float) -> float:
    """mu_tilde = int (rho^2 x^2 / 2 + rho x)^2 nu(dx)."""
    return (
        0.25 * rho**4 * raw_moment(spec, 4)
        + rho**3 * raw_moment(spec, 3)
        + rho**2 * raw_moment(spec, 2)
    )


def jump_constant_C(params: ModelParams) -> float:
    """C = lambda * psi(-rho), nonnegative since rho <= 0.

    The jump factor of the expected price is ``E[exp(rho Z_{lambda t})] = exp(-C t)``.
    """
    params.check()
    return params.lam * laplace_exponent(params.subordinator, -params.rho)


@dataclass(frozen=True)
class JumpMoments:
    omega_tilde: float
    mu_tilde: float
    sigma_prime: float
    mu_bar: float


def jump_moments(params: ModelParams) -> JumpMoments:
    params.check()
    om = jump_moment1(params.subordinator, params.rho)
    mu = jump_moment2(params.subordinator, params.rho)
    return JumpMoments(om, mu, params.lam * om, params.lam * mu)


@dataclass(frozen=True)
class CumulantParams:
    """Inputs of the cumulant g(xi) of the log-price increment per unit time.

    ``drift`` is used only when ``include_drift`` is set; the jump part is
    dropped when ``include_jumps`` is false.
    """

    sigma: float
    rho: float = 0.0
    lam: float = 1.0
    subordinator: SubordinatorSpec = field(default_factory=SubordinatorSpec)
    drift: float = 0.0
    include_drift: bool = False
    include_jumps: bool = True

    @classmethod
    def from_params(
        cls, params: ModelParams, *, include_drift: bool = False, include_jumps: bool = True
    ) -> CumulantParams:
        return cls(
            sigma=params.sigma,
            rho=params.rho,
            lam=params.lam,
            subordinator=params.subordinator,
            drift=params.r - params.q,
            include_drift=include_drift,
            include_jumps=include_jumps,
        )

    @property
    def jumps_active(self) -> bool:
        return self.include_jumps and self.subordinator.has_jumps and self.rho != 0.0

    @property
    def xi_min(self) -> float:
        """Infimum of the domain where g is finite (g diverges as xi -> xi_min)."""
        if self.jumps_active and self.rho < 0.0:
            return self.subordinator.a / self.rho
        return -math.inf

    @property
    def xi_max(self) -> float:
        if self.jumps_active and self.rho > 0.0:
            return self.subordinator.a / self.rho
        return math.inf


def _jump_parts(spec: SubordinatorSpec, s: np.ndarray):
    """G(s), G'(s), G''(s) for G(s) = int (e^{sy} - 1 - s y 1{y<=1}) nu(dy)."""
    c, a = spec.c, spec.a
    gap = a - s
    if spec.family is Family.CPE:
        trunc = c * (-math.expm1(-a) - a * math.exp(-a)) / a  # int_0^1 y nu(dy)
        g0 = c * s / gap - s * trunc
        g1 = c * a / gap**2 - trunc
        g2 = 2.0 * c * a / gap**3
    else:
        trunc = c * (-math.expm1(-a)) / a
        g0 = -c * np.log1p(-s / a) - s * trunc
        g1 = c / gap - trunc
        g2 = c / gap**2
    return g0, g1, g2


def _check_domain(cp: CumulantParams, xi: np.ndarray) -> None:
    if np.any(xi <= cp.xi_min) or np.any(xi >= cp.xi_max):
        raise ValidationError(
            f"cumulant g diverges outside ({cp.xi_min}, {cp.xi_max}); got xi={xi}"
        )


def cumulant_derivs(cp: CumulantParams, xi):
    """Return (g, g', g'') evaluated at ``xi`` (scalar or array)."""
    x = np.asarray(xi, dtype=float)
    _check_domain(cp, x)
    d = cp.drift if cp.include_drift else 0.0
    s2 = cp.sigma**2
    g0 = d * x + 0.5 * s2 * x * x
    g1 = d + s2 * x
    g2 = np.full_like(x, s2)
    if cp.jumps_active:
        j0, j1, j2 = _jump_parts(cp.subordinator, cp.rho * x)
        g0 = g0 + cp.lam * j0
        g1 = g1 + cp.lam * cp.rho * j1
        g2 = g2 + cp.lam * cp.rho**2 * j2
    if np.ndim(xi) == 0:
        return float(g0), float(g1), float(g2)
    return g0, g1, g2


def cumulant_g(cp: CumulantParams, xi):
    """g(xi) = b xi + sigma^2 xi^2 / 2 + lambda int (e^{y rho xi} - 1 - y rho xi 1{y<=1}) nu(dy)."""
    return cumulant_derivs(cp, xi)[0]


def sample_increments(
    spec: SubordinatorSpec, lam: float, dt: float, n, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` independent increments of ``Z_{lam t}`` over a step ``dt``.

    ``n`` may be an int or a shape tuple.
    """
    if not dt > 0.0:
        raise ValidationError(f"dt must be positive, got {dt}")
    h = lam * dt
    drift = spec.b * h
    if not spec.has_jumps:
        return np.full(n, drift)
    if spec.family is Family.CPE:
        counts = rng.poisson(spec.c * h, size=n)
        # a sum of k iid Exp(a) draws is Gamma(k, 1/a); shape 0 yields exactly 0
        out = rng.gamma(counts.astype(float), 1.0 / spec.a)
    else:
        out = rng.gamma(spec.c * h, 1.0 / spec.a, size=n)
    if drift:
        out += drift
    return out
