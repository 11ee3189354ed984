import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levy_window.exceptions import DataError, DegenerateScaleError, DomainError
from levy_window.market import (
    HorizonGrid,
    PriceSeries,
    build_returns,
    log_grid,
    read_csv,
    robust_scale,
    scale_curve,
    simulate_two_regime,
    write_csv,
)
from levy_window.stable import StableParams


def series(x, step=1.0):
    x = np.asarray(x, dtype=float)
    return PriceSeries(np.arange(len(x)) * step, x, step)


def grid_from_returns(r):
    # a grid with one horizon whose returns are exactly r
    x = np.concatenate(([0.0], np.cumsum(r)))
    return HorizonGrid(horizons=np.array([1]), log_prices=x)


# ---------------------------------------------------------------- PriceSeries

def test_series_rejects_unequal_spacing():
    with pytest.raises(DataError, match="index 2"):
        PriceSeries(np.array([0.0, 1.0, 3.0]), np.zeros(3), 1.0)


def test_series_rejects_short_and_mismatched():
    with pytest.raises(DataError):
        PriceSeries(np.array([0.0]), np.array([0.0]), 1.0)
    with pytest.raises(DataError):
        PriceSeries(np.arange(3.0), np.zeros(4), 1.0)


def test_series_accepts_spacing_within_tolerance():
    t = np.arange(5) * 60.0
    t[3] += 60.0 * 1e-11
    assert len(PriceSeries(t, np.zeros(5), 60.0)) == 5


# ---------------------------------------------------------------- returns

def test_build_returns_unit_horizon():
    g = build_returns(series([0, 0.1, 0.3]), [1])
    np.testing.assert_array_equal(g.returns[0], [0.1 - 0.0, 0.3 - 0.1])
    np.testing.assert_allclose(g.returns[0], [0.1, 0.2], rtol=1e-15)


def test_build_returns_two_steps():
    g = build_returns(series([0, 0.1, 0.3]), [2])
    np.testing.assert_array_equal(g.returns[0], [0.3])


def test_build_returns_constant_prices():
    g = build_returns(series(np.full(10, 4.2)), [1, 3])
    for r in g.returns:
        assert np.all(r == 0.0)


def test_build_returns_exact_differences():
    x = np.random.default_rng(0).standard_normal(200).cumsum()
    g = build_returns(series(x), [1, 5, 17])
    for h, r in zip(g.horizons, g.returns):
        assert len(r) == len(x) - h
        np.testing.assert_array_equal(r, x[h:] - x[:-h])
    np.testing.assert_array_equal(g.sample_sizes(), len(x) - g.horizons)


@pytest.mark.parametrize("h", [[1.5], [0], [3, 2], [5]])
def test_build_returns_rejects_bad_horizons(h):
    with pytest.raises(DomainError):
        build_returns(series([0, 0.1, 0.3, 0.2, 0.5]), h)


def test_log_grid_spacing():
    h = log_grid(1, 1000, per_decade=8)
    assert h[0] == 1 and h[-1] == 1000
    assert np.all(np.diff(h) > 0)
    # near-even spacing in log tau once rounding no longer collides
    d = np.diff(np.log(h[h >= 20]))
    assert np.allclose(d, math.log(10) / 8, atol=0.05)


def test_log_grid_anchor_included():
    assert 64 in log_grid(1, 1024, per_decade=8, anchor=64)


# ---------------------------------------------------------------- scale

def test_mad_hand_values():
    assert robust_scale([-1, 0, 1]) == 1.0
    assert robust_scale(np.array([-1, 0, 1]) + 5) == 1.0
    assert robust_scale(3 * np.array([-1, 0, 1])) == 3.0


def test_iqr_hand_value():
    assert robust_scale(np.arange(5.0), "iqr") == pytest.approx(2.0)


def test_scale_curve_matches_direct_mad():
    x = np.random.default_rng(1).standard_normal(500).cumsum()
    g = build_returns(series(x), [1, 2, 7])
    sc = scale_curve(g)
    ref = [robust_scale(r) for r in g.returns]
    np.testing.assert_allclose(sc.s_values, ref, rtol=1e-14)
    np.testing.assert_allclose(sc.g_values, np.log(ref), rtol=1e-14)


def test_scale_curve_iqr():
    x = np.random.default_rng(2).standard_normal(500).cumsum()
    g = build_returns(series(x), [1, 4])
    sc = scale_curve(g, "iqr")
    ref = [np.subtract(*np.quantile(r, [0.75, 0.25])) for r in g.returns]
    np.testing.assert_allclose(sc.s_values, ref, rtol=1e-14)


def test_scale_curve_small_sample():
    with pytest.raises(DataError, match="floor"):
        scale_curve(build_returns(series(np.arange(10.0) ** 2), [1]))


def test_scale_curve_zero_dispersion():
    with pytest.raises(DegenerateScaleError):
        scale_curve(build_returns(series(np.arange(40.0)), [1]))


def test_scale_curve_unknown_functional():
    with pytest.raises(DomainError):
        scale_curve(build_returns(series(np.random.default_rng(0).random(40)), [1]), "std")


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-1e3, 1e3), lam=st.floats(1e-3, 1e3),
       functional=st.sampled_from(["mad", "iqr"]),
       seed=st.integers(0, 2 ** 16))
def test_scale_location_invariance_and_homogeneity(c, lam, functional, seed):
    r = np.random.default_rng(seed).standard_normal(64)
    base = scale_curve(grid_from_returns(r), functional).s_values[0]
    shifted = scale_curve(grid_from_returns(r + c), functional).s_values[0]
    scaled = scale_curve(grid_from_returns(lam * r), functional).s_values[0]
    assert shifted == pytest.approx(base, rel=1e-12, abs=1e-12 * (1 + abs(c)))
    assert scaled == pytest.approx(lam * base, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-1e-2, 1e-2), lam=st.floats(0.1, 10))
def test_scale_curve_affine_price_transform(a, b, lam):
    # adding a + b t to X shifts each return by b tau: S_tau unchanged
    x = np.random.default_rng(3).standard_normal(300).cumsum()
    h = [1, 3, 9]
    s0 = scale_curve(build_returns(series(x), h)).s_values
    s1 = scale_curve(build_returns(series(lam * x + a + b * np.arange(300)), h)).s_values
    np.testing.assert_allclose(s1, lam * s0, rtol=1e-9)


# ---------------------------------------------------------------- simulation

def test_simulation_deterministic():
    p = StableParams(1.5, sigma=0.01)
    a = simulate_two_regime(p, 2, 64, 5000, 9)
    b = simulate_two_regime(p, 2, 64, 5000, 9)
    np.testing.assert_array_equal(a.log_prices, b.log_prices)
    c = simulate_two_regime(p, 2, 64, 5000, 10)
    assert not np.array_equal(a.log_prices, c.log_prices)


def test_simulation_length_and_spacing():
    s = simulate_two_regime(StableParams(1.5), 1, 8, 1000, 0, mode="window", step=60.0, start=100.0)
    assert len(s) == 1001 and s.step == 60.0 and s.timestamps[0] == 100.0


@pytest.mark.parametrize("kw", [dict(tau_uv=8, tau_ir=4), dict(tau_uv=0, tau_ir=4), dict(n=999),
                                dict(mode="other")])
def test_simulation_validation(kw):
    args = dict(params=StableParams(1.5), tau_uv=1, tau_ir=8, n=2000, seed=0)
    args.update(kw)
    with pytest.raises(DomainError):
        simulate_two_regime(**args)


def _mad_slope(s, horizons):
    sc = scale_curve(build_returns(s, horizons))
    return np.polyfit(sc.log_horizons, sc.g_values, 1)[0]


def test_gaussian_path_slope_half():
    s = simulate_two_regime(StableParams(2.0), 1, 2, 200_000, 4, mode="window")
    assert _mad_slope(s, 2 ** np.arange(8)) == pytest.approx(0.5, abs=0.02)


def test_strict_stability_slope():
    s = simulate_two_regime(StableParams(1.5), 1, 2, 200_000, 5, mode="window")
    assert _mad_slope(s, 2 ** np.arange(8)) == pytest.approx(1 / 1.5, abs=0.02)


def test_two_regime_slopes():
    s = simulate_two_regime(StableParams(1.5), 2, 64, 400_000, 6)
    window = _mad_slope(s, [8, 16, 32, 64])
    beyond = _mad_slope(s, [256, 512, 1024, 2048])
    assert window == pytest.approx(2 / 3, abs=0.05)
    assert beyond == pytest.approx(0.5, abs=0.08)


# ---------------------------------------------------------------- CSV

def test_csv_round_trip(tmp_path):
    s = simulate_two_regime(StableParams(1.7), 1, 8, 1000, 3, mode="window", step=60.0)
    path = tmp_path / "x.csv"
    write_csv(s, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.log_prices, s.log_prices)
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    assert write_csv(back) == path.read_text()


def test_csv_raw_prices_logged():
    s = read_csv(io.StringIO("timestamp,price\n0,1\n1,2.718281828459045\n2,1\n"))
    np.testing.assert_allclose(s.log_prices, [0, 1, 0], atol=1e-15)


def test_csv_iso_timestamps():
    text = "timestamp,log_price\n2024-01-02T09:30:00Z,0\n2024-01-02T09:31:00Z,0.1\n2024-01-02T09:32:00Z,0.2\n"
    s = read_csv(io.StringIO(text))
    assert s.step == 60.0


@pytest.mark.parametrize("body,line", [
    ("0,1\n1,abc\n", 3),
    ("0,1\n1,-2\n", 3),
    ("0,1\n1,2,3\n", 3),
    ("0,1\n1,2\n2,3\n4,5\n", 5),
    ("0,1\n1,2\n1,3\n", 4),
    ("0,1\nyesterday,2\n", 3),
])
def test_csv_errors_carry_line_numbers(body, line):
    with pytest.raises(DataError) as e:
        read_csv(io.StringIO("timestamp,price\n" + body))
    assert e.value.line == line
    assert f"line {line}" in str(e.value)


def test_csv_bad_header_and_empty():
    with pytest.raises(DataError):
        read_csv(io.StringIO("time,close\n0,1\n1,2\n"))
    with pytest.raises(DataError):
        read_csv(io.StringIO(""))
    with pytest.raises(DataError):
        read_csv(io.StringIO("timestamp,price\n0,1\n"))


def test_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_csv(tmp_path / "nope.csv")
