import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asian_asym.asymptotics import averaged_forward
from asian_asym.calibration import (
    Calibrator,
    PriceSeries,
    SeriesError,
    bundled_examples,
    c_grid,
    fit_C,
    integrated_value,
    load_series,
    model_integrated,
    synthetic_series,
    write_series,
)
from asian_asym.model import ModelParams, ValidationError

R, Q, SIG = 0.01, 0.03, 0.3
M_TRUE = R - Q + 0.5 * SIG**2 + 0.1
NOISE_BAND = 0.03  # frozen from a 100-seed study; 95% quantile of |c* - 0.1| was <= 0.016


def write_csv(tmp_path, text):
    p = tmp_path / "s.csv"
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    s = load_series(write_csv(tmp_path, "date,close\n2023-01-02,100.5\n2023-01-03,101\n"))
    assert len(s) == 2
    assert s.closes.tolist() == [100.5, 101.0]


def test_load_negative_close_names_row(tmp_path):
    with pytest.raises(SeriesError, match="row 3"):
        load_series(write_csv(tmp_path, "date,close\n2023-01-02,100\n2023-01-03,-1\n"))


def test_load_missing_close(tmp_path):
    with pytest.raises(SeriesError, match="row 2"):
        load_series(write_csv(tmp_path, "date,close\n2023-01-02,\n"))


def test_load_duplicate_date(tmp_path):
    with pytest.raises(SeriesError, match="increasing"):
        load_series(write_csv(tmp_path, "date,close\n2023-01-02,100\n2023-01-02,101\n"))


@pytest.mark.parametrize(
    "text, match",
    [("", "header"), ("when,price\n2023-01-02,1\n", "header"), ("date,close\n", "empty"),
     ("date,close\nnot-a-date,1\n", "bad date"), ("date,close\n2023-01-02,abc\n", "bad close")],
)
def test_load_malformed(tmp_path, text, match):
    with pytest.raises(SeriesError, match=match):
        load_series(write_csv(tmp_path, text))


def test_load_missing_file(tmp_path):
    with pytest.raises(SeriesError, match="no such file"):
        load_series(tmp_path / "absent.csv")


def test_series_roundtrip(tmp_path):
    s = synthetic_series(100.0, 0.1, 20, noise=0.01, seed=3)
    write_series(s, tmp_path / "x.csv")
    back = load_series(tmp_path / "x.csv")
    assert np.array_equal(back.dates, s.dates)
    assert np.array_equal(back.closes, s.closes)


def test_integrated_constant():
    s = PriceSeries(np.arange(np.datetime64("2023-01-02"), np.datetime64("2023-01-10")), np.full(8, 100.0))
    assert integrated_value(s, 0, 7) == pytest.approx(100.0 * 7 / 252, rel=1e-15)
    assert integrated_value(s, 0, 7) == pytest.approx(2.7778, abs=5e-5)


def test_integrated_linear_is_exact():
    closes = 50.0 + 0.7 * np.arange(12)
    s = PriceSeries(np.arange(np.datetime64("2023-01-02"), np.datetime64("2023-01-14")), closes)
    # integral of the linear interpolant over k = 2..9 in units of 1/252
    a, b = 2, 9
    exact = (50.0 * (b - a) + 0.35 * (b * b - a * a)) / 252
    assert integrated_value(s, a, b - a) == pytest.approx(exact, rel=1e-14)


def test_integrated_exponential_within_trapezoid_bound():
    s = synthetic_series(100.0, 0.17, 31)
    T = 30 / 252
    exact = 100.0 / 0.17 * math.expm1(0.17 * T)
    h = 1 / 252
    bound = T * h * h / 12 * 100.0 * 0.17**2 * math.exp(0.17 * T)
    assert abs(integrated_value(s, 0, 30) - exact) <= bound


def test_integrated_overrun():
    s = synthetic_series(100.0, 0.0, 10)
    with pytest.raises(SeriesError):
        integrated_value(s, 5, 5)
    with pytest.raises(SeriesError):
        integrated_value(s, -1, 3)


def test_model_integrated_examples():
    assert model_integrated(100.0, 0.02, 0.02, 1e-12, 0.0, 0.3) == pytest.approx(30.0, rel=1e-12)
    T = 30 / 252
    v = model_integrated(100.0, 0.05, 0.0, 0.2, 0.1, T)
    assert v == pytest.approx(100.0 * math.expm1(0.17 * T) / 0.17, rel=1e-14)
    # frozen from the quadrature oracle
    assert v == pytest.approx(12.02604, abs=5e-6)
    with pytest.raises(ValidationError):
        model_integrated(100.0, 0.0, 0.0, 0.2, 0.0, 0.0)


@given(st.floats(0.0, 0.1), st.floats(0.0, 0.1), st.floats(0.05, 0.5), st.floats(-0.3, 0.5), st.floats(0.01, 1.0))
def test_model_integrated_equals_T_times_forward(r, q, sigma, C, T):
    p = ModelParams(r, q, sigma, 0.0, 1.0, s0=87.0)
    assert model_integrated(87.0, r, q, sigma, C, T) == pytest.approx(T * averaged_forward(p, T, jump_growth=C), rel=1e-15)


@pytest.mark.parametrize("h", [7, 14, 30])
def test_noiseless_exact_recovery(h):
    s = synthetic_series(100.0, M_TRUE, 250)
    exact = fit_C(s, R, Q, SIG, h, rule="trapezoid")
    assert abs(exact.c_star - 0.1) <= 1e-6
    assert exact.rmse <= 1e-9
    cont = fit_C(s, R, Q, SIG, h)
    # the continuous model absorbs the trapezoid bias into C
    assert abs(cont.c_star - 0.1) <= 2e-6
    assert cont.rmse <= 1e-9


def test_noisy_recovery_band():
    hits = 0
    for seed in range(100):
        s = synthetic_series(100.0, M_TRUE, 250, noise=0.01, seed=seed)
        hits += abs(fit_C(s, R, Q, SIG, 30).c_star - 0.1) <= NOISE_BAND
    assert hits >= 95


def test_result_invariants():
    s = synthetic_series(100.0, M_TRUE, 120, noise=0.02, seed=8)
    res = fit_C(s, R, Q, SIG, 14)
    assert res.grid.shape == (151, 2)
    assert 0.0 in res.grid[:, 0] and 0.1 in res.grid[:, 0]
    assert np.all(res.rmse <= res.grid[:, 1])
    cal = Calibrator(s, R, Q, SIG, 14)
    assert res.rmse == cal.rmse(res.c_star)
    assert res.n_windows == 120 - 14


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_scale_equivariance(seed, k):
    s = synthetic_series(100.0, 0.05, 60, noise=0.02, seed=seed)
    a = fit_C(s, 0.0, 0.01, 0.2, 7)
    b = fit_C(s.scaled(k), 0.0, 0.01, 0.2, 7)
    assert b.c_star == pytest.approx(a.c_star, abs=1e-7)
    assert b.rmse == pytest.approx(k * a.rmse, rel=1e-6)


@given(st.integers(0, 10_000), st.floats(-0.3, 0.6), st.floats(0.0, 0.05))
def test_beats_reference_values(seed, growth, noise):
    s = synthetic_series(50.0, growth, 40, noise=noise, seed=seed)
    res = fit_C(s, 0.02, 0.0, 0.25, 7)
    cal = Calibrator(s, 0.02, 0.0, 0.25, 7)
    assert res.rmse <= cal.rmse(0.0) and res.rmse <= cal.rmse(0.1)


def test_refinement_never_worse_at_range_edge():
    s = synthetic_series(100.0, 3.0, 60)
    res = fit_C(s, 0.0, 0.0, 0.2, 7)
    assert res.c_star == pytest.approx(1.0)
    assert res.rmse <= res.grid[:, 1].min()


def test_insufficient_windows():
    s = synthetic_series(100.0, 0.1, 9)
    with pytest.raises(SeriesError, match="at least 3"):
        fit_C(s, 0.0, 0.0, 0.2, 7)


def test_empty_c_range():
    with pytest.raises(ValidationError):
        c_grid((0.5, 0.5), 10)
    with pytest.raises(ValidationError):
        fit_C(synthetic_series(100.0, 0.1, 30), 0.0, 0.0, 0.2, 7, c_range=(1.0, -1.0))


def test_bundled_examples_favor_fitted_C():
    ex = bundled_examples()
    assert len(ex) >= 3
    for name, (series, cfg) in ex.items():
        assert cfg["r"] - cfg["q"] < 0.0
        for h in (7, 14, 30):
            res = fit_C(series, cfg["r"], cfg["q"], cfg["sigma"], h)
            assert res.rmse <= Calibrator(series, cfg["r"], cfg["q"], cfg["sigma"], h).rmse(0.0)
