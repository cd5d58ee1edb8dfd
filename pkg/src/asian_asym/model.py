"""Domain types shared by every part of the engine.

Prices follow the log-dynamics

    X_t = log S_t,   dX_t = (r - q) dt + sigma dW_t + rho dZ_{lambda t}

with a constant volatility and a Levy subordinator ``Z`` whose Levy measure is
described parametrically by :class:`SubordinatorSpec`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping


class ValidationError(ValueError):
    """Raised when an operation receives parameters that violate the model."""


class Family(str, enum.Enum):
    CPE = "cpe"  # compound Poisson, exponential jump sizes
    GAMMA = "gamma"
    DEGENERATE = "degenerate"  # pure drift

    @classmethod
    def parse(cls, value: str | Family) -> Family:
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "cpe": cls.CPE,
            "compound_poisson": cls.CPE,
            "compoundpoissonexponential": cls.CPE,
            "compound_poisson_exponential": cls.CPE,
            "gamma": cls.GAMMA,
            "degenerate": cls.DEGENERATE,
            "drift": cls.DEGENERATE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown subordinator family {value!r}") from None


@dataclass(frozen=True)
class SubordinatorSpec:
    """Parametric Levy subordinator.

    ``c`` and ``a`` mean:

    * CPE: jump intensity ``c`` and exponential jump rate ``a``,
      so ``nu(dx) = c * a * exp(-a x) dx``.
    * Gamma: ``nu(dx) = c * exp(-a x) / x dx``.
    * Degenerate: no jumps, ``c`` and ``a`` are ignored.

    ``b`` is the drift of the subordinator.
    """

    family: Family = Family.DEGENERATE
    c: float = 0.0
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("c", "a", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def cpe(cls, c: float, a: float, b: float = 0.0) -> SubordinatorSpec:
        return cls(Family.CPE, c, a, b)

    @classmethod
    def gamma(cls, c: float, a: float, b: float = 0.0) -> SubordinatorSpec:
        return cls(Family.GAMMA, c, a, b)

    @classmethod
    def degenerate(cls, b: float = 0.0) -> SubordinatorSpec:
        return cls(Family.DEGENERATE, 0.0, 1.0, b)

    @property
    def has_jumps(self) -> bool:
        return self.family is not Family.DEGENERATE and self.c > 0.0

    def violations(self) -> list[str]:
        out = []
        if not (math.isfinite(self.b) and self.b >= 0.0):
            out.append("subordinator drift b >= 0")
        if self.family is not Family.DEGENERATE:
            if not (math.isfinite(self.c) and self.c > 0.0):
                out.append("subordinator c > 0")
            if not (math.isfinite(self.a) and self.a > 0.0):
                out.append("subordinator a > 0")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family.value, "c": self.c, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SubordinatorSpec:
        return cls(
            family=d.get("family", "degenerate"),
            c=d.get("c", 0.0),
            a=d.get("a", 1.0),
            b=d.get("b", 0.0),
        )


@dataclass(frozen=True)
class ModelParams:
    r: float
    q: float
    sigma: float
    rho: float
    lam: float
    subordinator: SubordinatorSpec = field(default_factory=SubordinatorSpec)
    s0: float = 100.0

    def __post_init__(self) -> None:
        for name in ("r", "q", "sigma", "rho", "lam", "s0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def kappa(self) -> float:
        return -self.rho

    def replace(self, **changes: Any) -> ModelParams:
        d = {f: getattr(self, f) for f in ("r", "q", "sigma", "rho", "lam", "subordinator", "s0")}
        d.update(changes)
        return ModelParams(**d)

    def violations(self) -> list[str]:
        out = []
        if not (math.isfinite(self.r) and self.r >= 0.0):
            out.append("r >= 0")
        if not (math.isfinite(self.q) and self.q >= 0.0):
            out.append("q >= 0")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            out.append("sigma > 0")
        if not (math.isfinite(self.rho) and self.rho <= 0.0):
            out.append("rho <= 0")
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            out.append("lambda > 0")
        if not (math.isfinite(self.s0) and self.s0 > 0.0):
            out.append("s0 > 0")
        out.extend(self.subordinator.violations())
        return out

    def check(self) -> ModelParams:
        bad = self.violations()
        if bad:
            raise ValidationError("invalid model parameters: " + "; ".join(bad))
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "q": self.q,
            "sigma": self.sigma,
            "rho": self.rho,
            "lambda": self.lam,
            "s0": self.s0,
            "subordinator": self.subordinator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ModelParams:
        try:
            return cls(
                r=d["r"],
                q=d.get("q", 0.0),
                sigma=d["sigma"],
                rho=d.get("rho", 0.0),
                lam=d.get("lambda", d.get("lam", 1.0)),
                subordinator=SubordinatorSpec.from_dict(d.get("subordinator", {})),
                s0=d["s0"],
            )
        except KeyError as exc:
            raise ValidationError(f"missing parameter {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed parameters: {exc}") from None


class OptionKind(str, enum.Enum):
    CALL = "call"
    PUT = "put"

    @classmethod
    def parse(cls, value: str | OptionKind) -> OptionKind:
        if isinstance(value, OptionKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"option kind must be 'call' or 'put', got {value!r}") from None


@dataclass(frozen=True)
class OptionSpec:
    """Fixed-strike arithmetic Asian option."""

    strike: float
    maturity: float
    kind: OptionKind = OptionKind.CALL

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OptionKind.parse(self.kind))
        object.__setattr__(self, "strike", float(self.strike))
        object.__setattr__(self, "maturity", float(self.maturity))

    def check(self) -> OptionSpec:
        if not (math.isfinite(self.strike) and self.strike > 0.0):
            raise ValidationError("strike > 0 required")
        if not (math.isfinite(self.maturity) and self.maturity > 0.0):
            raise ValidationError("maturity > 0 required")
        return self


@dataclass(frozen=True)
class PriceEstimate:
    mean: float
    stderr: float
    n_paths: int
    n_steps: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
        }


class Moneyness(str, enum.Enum):
    OTM = "OTM"
    ITM = "ITM"
    ATM = "ATM"


ATM_TOL = 1e-9


def classify(option: OptionSpec, s0: float, tol: float = ATM_TOL) -> Moneyness:
    """Moneyness of ``option`` against spot ``s0``.

    The strike is ATM when it lies within ``tol * s0`` of the spot.
    """
    if s0 <= 0.0 or tol < 0.0:
        raise ValidationError("classify needs s0 > 0 and tol >= 0")
    k = option.strike
    if k > s0 * (1.0 + tol):
        above = True
    elif k < s0 * (1.0 - tol):
        above = False
    else:
        return Moneyness.ATM
    if option.kind is OptionKind.CALL:
        return Moneyness.OTM if above else Moneyness.ITM
    return Moneyness.ITM if above else Moneyness.OTM


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]
    omega_tilde: float
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def omega_sign(self) -> int:
        if self.omega_tilde > 0.0:
            return 1
        if self.omega_tilde < 0.0:
            return -1
        return 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": list(self.violations),
            "omega_tilde": self.omega_tilde,
            "omega_sign": self.omega_sign,
            "warnings": list(self.warnings),
        }


def validate(params: ModelParams) -> ValidationReport:
    """Collect every violated model constraint without raising.

    Constant volatility trivially satisfies the Hoelder condition on the local
    volatility, so only positivity and finiteness of ``sigma`` are checked.
    """
    from .subordinator import jump_moment1

    violations = tuple(params.violations())
    warnings = []
    if params.subordinator.has_jumps and not params.subordinator.violations():
        omega = jump_moment1(params.subordinator, params.rho)
        # exponential moments of Z_1 are finite only below a, not for every level
        warnings.append("exponential integrability fails: the subordinator lacks exponential moments of all orders")
    elif not params.subordinator.violations():
        omega = 0.0
    else:
        omega = math.nan
    return ValidationReport(violations, omega, tuple(warnings))
