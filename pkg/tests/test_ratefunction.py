import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asian_asym.model import ModelParams, SubordinatorSpec, ValidationError
from asian_asym.montecarlo import McConfig
from asian_asym.ratefunction import (
    BoundarySupremumWarning,
    InsufficientSamplingError,
    OptimizerConfig,
    _intercept,
    empirical_rate,
    legendre,
    legendre_table,
    rate_function,
    rate_on_grid,
)
from asian_asym.subordinator import CumulantParams, cumulant_derivs, cumulant_g
from oracles import brute_legendre, lattice_rate

CPE12 = SubordinatorSpec.cpe(1.0, 2.0)
JUMPY = CumulantParams(sigma=0.2, rho=-0.5, lam=1.5, subordinator=CPE12)
GAMMA = CumulantParams(sigma=0.3, rho=-0.8, lam=2.0, subordinator=SubordinatorSpec.gamma(1.0, 1.5))


def diffusion(sigma=0.2, **kw):
    return ModelParams(r=kw.pop("r", 0.0), q=kw.pop("q", 0.0), sigma=sigma, rho=kw.pop("rho", 0.0), lam=1.0, **kw)


def bs_rate(K, sigma, s0=100.0):
    """Closed-form rate for the pure-diffusion arithmetic average (K > s0)."""
    from scipy.optimize import brentq

    beta = brentq(lambda b: math.sinh(b) / b - K / s0, 1e-12, 50.0)
    return (0.5 * beta * beta - beta * math.tanh(beta / 2.0)) / sigma**2


def test_legendre_diffusion_example():
    cp = CumulantParams(sigma=0.2)
    gs, xs = legendre(cp, 0.1)
    assert gs == pytest.approx(0.125, rel=1e-14)
    assert xs == pytest.approx(2.5, rel=1e-14)
    brute, _ = brute_legendre(lambda x: 0.02 * x * x, [0.1], -100.0, 100.0, n_grid=1_000_001)
    assert gs == pytest.approx(brute[0], rel=1e-9)


@pytest.mark.parametrize("cp", [CumulantParams(sigma=0.2), JUMPY, GAMMA])
def test_legendre_zero_at_mean_slope(cp):
    alpha0 = cumulant_derivs(cp, 0.0)[1]
    gs, xs = legendre(cp, alpha0)
    assert gs <= 1e-10
    assert abs(xs) <= 1e-10


@pytest.mark.parametrize("cp", [JUMPY, GAMMA])
def test_legendre_vs_brute_force(cp):
    alphas = np.linspace(-1.5, 1.5, 13)
    tab = legendre_table(cp, alphas)
    lo = cp.xi_min + 1e-6
    brute, args = brute_legendre(lambda x: cumulant_g(cp, x), alphas, lo, 60.0, n_grid=400_001)
    assert np.allclose(tab.gstar, brute, rtol=1e-8, atol=1e-10)
    assert np.allclose(tab.xi_star, args, rtol=1e-4, atol=1e-4)
    assert np.all(tab.gstar >= 0.0)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 20.0))
def test_fenchel_young(alpha, xi):
    for cp in (JUMPY, GAMMA, CumulantParams(sigma=0.3)):
        if xi <= cp.xi_min:
            continue
        gs, _ = legendre(cp, alpha)
        assert alpha * xi <= cumulant_g(cp, xi) + gs + 1e-10


@given(st.floats(-2.0, 2.0))
def test_envelope_gradient(alpha):
    for cp in (JUMPY, GAMMA):
        _, xs = legendre(cp, alpha)
        h = 1e-5
        fd = (legendre(cp, alpha + h)[0] - legendre(cp, alpha - h)[0]) / (2 * h)
        assert xs == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_legendre_table_convex():
    tab = legendre_table(JUMPY, np.linspace(-2.0, 2.0, 81))
    assert np.all(np.diff(tab.gstar, 2) >= -1e-12)


def test_legendre_boundary_warning():
    # g' is steep at the finite left edge, so only an extreme slope pins the maximizer
    # within the 1e-9 relative clamp distance of the edge
    cp = CumulantParams(sigma=1e-6, rho=-0.5, lam=1.0, subordinator=CPE12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        legendre(cp, -1e12)
    with pytest.warns(BoundarySupremumWarning):
        gs, xs = legendre(cp, -1e20)
    assert math.isfinite(gs)
    assert xs > cp.xi_min


def test_rate_zero_at_the_money():
    res = rate_function(diffusion(), 100.0)
    assert res.value == 0.0
    assert np.allclose(res.path[:, 1], math.log(100.0))
    assert res.converged


@pytest.mark.parametrize("K", [105.0, 110.0, 120.0, 150.0])
def test_rate_matches_closed_form_diffusion(K):
    res = rate_function(diffusion(0.2), K)
    assert res.converged
    assert res.value == pytest.approx(bs_rate(K, 0.2), rel=2e-3)


def test_rate_result_invariants():
    res = rate_function(diffusion(0.25), 115.0)
    assert res.path[0, 1] == math.log(100.0)
    phi = res.path[:, 1]
    n = res.n_knots
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    avg = np.dot(w, np.exp(phi)) / n
    assert abs(avg - 115.0) <= 1e-7 * 115.0
    assert abs(res.terminal_gradient) <= 1e-5
    assert res.value >= 0.0
    n_last, v_last = res.history[-1]
    n_prev, v_prev = res.history[-2]
    assert n_last == 2 * n_prev
    assert abs(v_last - v_prev) <= 1e-3 * v_last


def test_rate_monotone_in_strike():
    vals = [rate_function(diffusion(0.2), K).value for K in (102.0, 110.0, 125.0)]
    assert vals[0] < vals[1] < vals[2]


def test_rate_put_side_positive():
    res = rate_function(diffusion(0.2), 90.0)
    assert res.converged and res.value > 0.0


@pytest.mark.parametrize("dr, dq", [(0.05, 0.0), (0.0, 0.03), (0.1, 0.07)])
def test_rate_independent_of_r_q(dr, dq):
    base = rate_function(diffusion(0.2), 110.0).value
    moved = rate_function(diffusion(0.2, r=dr, q=dq), 110.0).value
    assert abs(moved - base) <= 1e-6 * base


def test_rate_scale_invariance():
    a = rate_function(diffusion(0.2), 110.0).value
    b = rate_function(diffusion(0.2, s0=50.0), 55.0).value
    assert b == pytest.approx(a, rel=1e-9)


def test_rate_vs_lattice_dp():
    I_dp = lattice_rate(lambda a: a * a / (2 * 0.04), 1.1, 32)
    I_var = rate_on_grid(diffusion(0.2), 110.0, 32).value
    assert abs(I_var - I_dp) <= 0.02 * I_dp


def test_include_jumps_changes_value():
    p = ModelParams(0.0, 0.0, 0.2, -0.5, 1.0, CPE12)
    off = rate_function(p, 110.0)
    on = rate_function(p, 110.0, opt=OptimizerConfig(include_jumps=True))
    assert not off.include_jumps and on.include_jumps
    assert off.value == pytest.approx(rate_function(diffusion(0.2), 110.0).value, rel=1e-12)
    assert on.converged and on.value != off.value


def test_rate_reports_nonconvergence():
    res = rate_function(diffusion(0.2), 150.0, opt=OptimizerConfig(max_outer=1, max_knots=16))
    assert not res.converged


@pytest.mark.parametrize("bad", [dict(n_knots=4), dict(rel_tol=0.0), dict(max_outer=0), dict(n_knots=64, max_knots=32)])
def test_optimizer_config_validation(bad):
    with pytest.raises(ValidationError):
        OptimizerConfig(**bad).check()


def test_rate_input_validation():
    with pytest.raises(ValidationError):
        rate_function(diffusion(), 0.0)
    with pytest.raises(ValidationError):
        rate_function(diffusion(), 110.0, n_knots=4)


def test_empirical_rate_sure_event():
    p = diffusion(1e-300)
    emp = empirical_rate(p, 50.0, McConfig(n_paths=1000), [0.2, 0.1, 0.05], upper=True)
    assert np.all(emp.minus_T_logP == 0.0)
    assert emp.extrapolated == pytest.approx(0.0, abs=1e-15)
    assert emp.monotone_ok


def test_empirical_rate_all_zero_hits():
    with pytest.raises(InsufficientSamplingError):
        empirical_rate(diffusion(0.2), 300.0, McConfig(n_paths=1000), [0.02, 0.01], tilt=False)


def test_empirical_rate_grid_validation():
    with pytest.raises(ValidationError):
        empirical_rate(diffusion(0.2), 110.0, McConfig(n_paths=1000), [0.05, 0.1])


def test_empirical_rate_matches_variational():
    emp = empirical_rate(diffusion(0.2), 110.0, McConfig(n_paths=200_000, seed=1), [0.2, 0.1, 0.05])
    I = rate_function(diffusion(0.2), 110.0).value
    assert emp.monotone_ok and emp.excluded == 0
    assert abs(emp.extrapolated - I) <= 0.2 * I


def test_empirical_rate_decreases_when_strike_gap_halves():
    cfg = McConfig(n_paths=200_000, seed=5)
    far = empirical_rate(diffusion(0.2), 110.0, cfg, [0.2, 0.1, 0.05])
    near = empirical_rate(diffusion(0.2), 105.0, cfg, [0.2, 0.1, 0.05])
    assert near.extrapolated < far.extrapolated


def test_tlogt_extrapolation_recovers_exact_form():
    T = np.array([0.2, 0.1, 0.05])
    y = 0.3 - 1.5 * T * np.log(T) + 2.0 * T
    assert _intercept(T, y, "tlogt") == pytest.approx(0.3, abs=1e-12)
    assert abs(_intercept(T, y, "linear") - 0.3) > 0.05
    # two points fall back to a line
    assert _intercept(T[:2], y[:2], "tlogt") == pytest.approx(_intercept(T[:2], y[:2], "linear"))


def test_price_extrapolation_is_unit_free():
    cfg = McConfig(n_paths=200_000, seed=8)
    a = empirical_rate(diffusion(0.2), 110.0, cfg, [0.2, 0.1, 0.05], quantity="price")
    b = empirical_rate(diffusion(0.2, s0=1.0), 1.1, cfg, [0.2, 0.1, 0.05], quantity="price")
    assert a.extrapolated == pytest.approx(b.extrapolated, rel=1e-9)
    with pytest.raises(ValidationError):
        empirical_rate(diffusion(0.2), 110.0, cfg, [0.2, 0.1], extrapolation="cubic")
