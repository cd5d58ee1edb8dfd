"""Fit the jump growth constant C to integrated daily price series.

Each rolling window of ``horizon_days`` trading days yields one observation,
the trapezoid integral of the closes with a step of 1/252 year. The model value
is the expected integral ``S0 (exp(m T) - 1) / m`` with
``m = (r - q) + sigma^2 / 2 + C`` and ``S0`` the window's first close.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from .asymptotics import mean_growth_factor
from .model import ValidationError

DAYS_PER_YEAR = 252
DEFAULT_C_RANGE = (-0.5, 1.0)
DEFAULT_N_GRID = 151
RULES = ("continuous", "trapezoid")


class SeriesError(ValidationError):
    """Malformed or inconsistent price series."""


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray  # datetime64[D], strictly increasing
    closes: np.ndarray

    def __post_init__(self) -> None:
        if self.dates.shape != self.closes.shape:
            raise SeriesError("dates and closes differ in length")
        if self.closes.size == 0:
            raise SeriesError("empty price series")
        if np.any(~np.isfinite(self.closes)) or np.any(self.closes <= 0.0):
            raise SeriesError("closes must be positive and finite")
        if self.dates.size > 1 and np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise SeriesError("dates must be strictly increasing")

    def __len__(self) -> int:
        return int(self.closes.size)

    def scaled(self, k: float) -> PriceSeries:
        return PriceSeries(self.dates, self.closes * k)


def load_series(path: str | Path) -> PriceSeries:
    """Read a ``date,close`` CSV with ISO-8601 dates."""
    path = Path(path)
    if not path.is_file():
        raise SeriesError(f"no such file: {path}")
    dates, closes = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "close"]:
            raise SeriesError(f"{path}: expected header 'date,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2 or not row[1].strip():
                raise SeriesError(f"{path}: row {lineno}: missing close")
            try:
                d = np.datetime64(row[0].strip(), "D")
            except ValueError:
                raise SeriesError(f"{path}: row {lineno}: bad date {row[0]!r}") from None
            try:
                c = float(row[1])
            except ValueError:
                raise SeriesError(f"{path}: row {lineno}: bad close {row[1]!r}") from None
            if not (math.isfinite(c) and c > 0.0):
                raise SeriesError(f"{path}: row {lineno}: close must be positive, got {row[1].strip()}")
            if dates and d <= dates[-1]:
                raise SeriesError(f"{path}: row {lineno}: dates not strictly increasing ({d})")
            dates.append(d)
            closes.append(c)
    if not closes:
        raise SeriesError(f"{path}: empty series")
    return PriceSeries(np.array(dates, dtype="datetime64[D]"), np.array(closes))


def write_series(series: PriceSeries, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close"])
        for d, c in zip(series.dates, series.closes):
            w.writerow([str(d), repr(float(c))])


def integrated_value(series: PriceSeries, start: int, horizon_days: int) -> float:
    """Trapezoid integral of closes over ``horizon_days`` steps of 1/252 year."""
    end = start + horizon_days
    if start < 0 or horizon_days < 1 or end >= len(series):
        raise SeriesError(
            f"window [{start}, {end}] does not fit in a series of length {len(series)}"
        )
    seg = series.closes[start : end + 1]
    return float((seg.sum() - 0.5 * (seg[0] + seg[-1])) / DAYS_PER_YEAR)


def _window_observations(series: PriceSeries, horizon_days: int):
    c = series.closes
    n_win = len(series) - horizon_days
    if n_win < 1:
        raise SeriesError("series shorter than one window")
    csum = np.concatenate(([0.0], np.cumsum(c)))
    starts = np.arange(n_win)
    total = csum[starts + horizon_days + 1] - csum[starts]
    obs = (total - 0.5 * (c[starts] + c[starts + horizon_days])) / DAYS_PER_YEAR
    return starts, c[starts], obs


def model_integrated(s0: float, r: float, q: float, sigma: float, C: float, T: float) -> float:
    """E[int_0^T S_t dt] = S0 (exp(m T) - 1) / m, m = (r - q) + sigma^2/2 + C."""
    if not T > 0.0:
        raise ValidationError(f"T must be positive, got {T}")
    m = r - q + 0.5 * sigma**2 + C
    return s0 * T * mean_growth_factor(m, T)


def _model_factor(m: float, horizon_days: int, rule: str) -> float:
    """Expected integral per unit of starting price."""
    T = horizon_days / DAYS_PER_YEAR
    if rule == "continuous":
        return T * mean_growth_factor(m, T)
    t = np.arange(horizon_days + 1) / DAYS_PER_YEAR
    e = np.exp(m * t)
    return float((e.sum() - 0.5 * (e[0] + e[-1])) / DAYS_PER_YEAR)


@dataclass(frozen=True)
class CalibrationResult:
    c_star: float
    rmse: float
    window_days: int
    grid: np.ndarray  # shape (n_grid, 2): C, rmse
    n_windows: int
    rule: str = "continuous"

    def to_dict(self) -> dict:
        return {
            "c_star": self.c_star,
            "rmse": self.rmse,
            "window_days": self.window_days,
            "n_windows": self.n_windows,
            "rule": self.rule,
            "n_grid": int(self.grid.shape[0]),
        }


class Calibrator:
    """RMSE of model vs observed integrated values as a function of C."""

    def __init__(
        self,
        series: PriceSeries,
        r: float,
        q: float,
        sigma: float,
        horizon_days: int,
        rule: str = "continuous",
    ):
        if rule not in RULES:
            raise ValidationError(f"rule must be one of {RULES}")
        if horizon_days < 1:
            raise ValidationError("horizon_days >= 1 required")
        self.base = r - q + 0.5 * sigma**2
        self.horizon_days = horizon_days
        self.rule = rule
        self.starts, self.s0, self.observed = _window_observations(series, horizon_days)

    @property
    def n_windows(self) -> int:
        return int(self.observed.size)

    def predicted(self, C: float) -> np.ndarray:
        return self.s0 * _model_factor(self.base + C, self.horizon_days, self.rule)

    def rmse(self, C: float) -> float:
        err = self.predicted(C) - self.observed
        return float(math.sqrt(np.mean(err * err)))


def c_grid(c_range: Sequence[float], n_grid: int) -> np.ndarray:
    lo, hi = float(c_range[0]), float(c_range[1])
    if not hi > lo or n_grid < 2:
        raise ValidationError("c_range must be a nonempty interval and n_grid >= 2")
    # rounding keeps round values such as 0 and 0.1 exact on decimal grids
    return np.round(np.linspace(lo, hi, n_grid), 12)


def fit_C(
    series: PriceSeries,
    r: float,
    q: float,
    sigma: float,
    horizon_days: int,
    c_range: Sequence[float] = DEFAULT_C_RANGE,
    n_grid: int = DEFAULT_N_GRID,
    *,
    rule: str = "continuous",
) -> CalibrationResult:
    """Grid scan of RMSE over ``c_range`` followed by golden-section refinement."""
    cal = Calibrator(series, r, q, sigma, horizon_days, rule)
    if cal.n_windows < 3:
        raise SeriesError(
            f"need at least 3 rolling windows of {horizon_days} days, have {cal.n_windows}"
        )
    grid = c_grid(c_range, n_grid)
    errs = np.array([cal.rmse(c) for c in grid])
    i = int(np.argmin(errs))
    best_c, best_err = float(grid[i]), float(errs[i])
    if 0 < i < grid.size - 1:
        res = optimize.minimize_scalar(
            cal.rmse, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=1e-12
        )
    else:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        res = optimize.minimize_scalar(cal.rmse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    if grid[0] <= res.x <= grid[-1] and res.fun <= best_err:
        best_c, best_err = float(res.x), float(res.fun)
    return CalibrationResult(
        c_star=best_c,
        rmse=best_err,
        window_days=horizon_days,
        grid=np.column_stack((grid, errs)),
        n_windows=cal.n_windows,
        rule=rule,
    )


def synthetic_series(
    s0: float,
    growth: float,
    n_days: int,
    *,
    noise: float = 0.0,
    seed: int = 0,
    start: str = "2023-01-03",
) -> PriceSeries:
    """Business-day series ``s0 exp(growth t_k) * exp(noise N_k)`` with t_k = k/252."""
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    t = np.arange(n_days) / DAYS_PER_YEAR
    closes = s0 * np.exp(growth * t)
    if noise:
        rng = np.random.default_rng(seed)
        closes = closes * np.exp(noise * rng.standard_normal(n_days))
    return PriceSeries(dates, closes)


def curves(
    series: PriceSeries, r: float, q: float, sigma: float, horizon_days: int, C: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(window start dates, observed integrals, model integrals at C)."""
    cal = Calibrator(series, r, q, sigma, horizon_days)
    return series.dates[cal.starts], cal.observed, cal.predicted(C)


def bundled_examples() -> dict[str, tuple[PriceSeries, dict]]:
    """Example series shipped with the package, with their (r, q, sigma) configs."""
    import json
    from importlib import resources

    root = resources.files("asian_asym") / "data"
    configs = json.loads((root / "examples.json").read_text())
    out = {}
    for name, cfg in configs.items():
        with resources.as_file(root / cfg["file"]) as path:
            out[name] = (load_series(path), {k: cfg[k] for k in ("r", "q", "sigma")})
    return out
