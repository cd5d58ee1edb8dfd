"""Regenerate the bundled example price series.

Each series is one simulated daily path of the jump-diffusion model over 250
trading days starting 2023-01-03, with r - q < 0.
"""

import math
from pathlib import Path

import numpy as np

from asian_asym.calibration import DAYS_PER_YEAR, PriceSeries, write_series
from asian_asym.model import ModelParams, SubordinatorSpec
from asian_asym.subordinator import sample_increments

OUT = Path(__file__).resolve().parents[1] / "src" / "asian_asym" / "data"

EXAMPLES = {
    "example_cpe": (ModelParams(r=0.01, q=0.03, sigma=0.25, rho=-0.1, lam=2.0,
                                subordinator=SubordinatorSpec.cpe(3.0, 2.0), s0=120.0), 11),
    "example_gamma": (ModelParams(r=0.02, q=0.04, sigma=0.3, rho=-0.2, lam=1.0,
                                  subordinator=SubordinatorSpec.gamma(2.0, 1.5), s0=45.0), 12),
    "example_diffusion": (ModelParams(r=0.0, q=0.01, sigma=0.2, rho=0.0, lam=1.0, s0=310.0), 13),
}


def simulate_daily(params: ModelParams, n_days: int, seed: int) -> PriceSeries:
    rng = np.random.default_rng(seed)
    dt = 1.0 / DAYS_PER_YEAR
    x = (params.r - params.q) * dt + params.sigma * math.sqrt(dt) * rng.standard_normal(n_days - 1)
    if params.subordinator.has_jumps:
        x = x + params.rho * sample_increments(params.subordinator, params.lam, dt, n_days - 1, rng)
    closes = params.s0 * np.exp(np.concatenate(([0.0], np.cumsum(x))))
    dates = np.busday_offset(np.datetime64("2023-01-03"), np.arange(n_days), roll="forward")
    return PriceSeries(dates, np.round(closes, 2))


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, (params, seed) in EXAMPLES.items():
        write_series(simulate_daily(params, 250, seed), OUT / f"{name}.csv")


if __name__ == "__main__":
    main()
