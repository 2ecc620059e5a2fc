import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlrcast import thermal
from dlrcast.thermal import ConductorParams, WeatherSample

DRAKE = ConductorParams()


def hand_rating(ta, v, phi_deg, g, d=0.02814, r=9.39e-5, eps=0.8, alpha=0.8, tc=100.0):
    """Scalar step-by-step heat balance, written out the way a spreadsheet would."""
    t_film = (tc + ta) / 2
    rho = 1.293 / (1 + 0.00367 * t_film)
    mu = 1.458e-6 * (t_film + 273) ** 1.5 / (t_film + 383.4)
    k_air = 0.02424 + 7.477e-5 * t_film - 4.407e-9 * t_film ** 2
    re = d * rho * v / mu
    phi = math.radians(phi_deg)
    k_angle = 1.194 - math.cos(phi) + 0.194 * math.cos(2 * phi) + 0.368 * math.sin(2 * phi)
    q_low = k_angle * (1.01 + 1.35 * re ** 0.52) * k_air * (tc - ta)
    q_high = k_angle * 0.754 * re ** 0.6 * k_air * (tc - ta)
    q_nat = 3.645 * math.sqrt(rho) * d ** 0.75 * (tc - ta) ** 1.25
    q_c = max(q_low, q_high, q_nat)
    q_r = 17.8 * d * eps * (((tc + 273) / 100) ** 4 - ((ta + 273) / 100) ** 4)
    q_s = alpha * g * d
    return math.sqrt(max(0.0, q_c + q_r - q_s) / r)


def test_reference_point_within_five_percent_of_hand_oracle():
    # 40 C, 0.61 m/s perpendicular to the line, full sun on a Drake conductor
    oracle = hand_rating(40.0, 0.61, 90.0, 1000.0)
    got = thermal.ampacity(DRAKE, WeatherSample(40.0, 0.61, 90.0, 1000.0), line_azimuth=0.0)
    assert abs(got - oracle) / oracle < 0.05
    # the same operating point worked by hand lands near 1025 A
    assert abs(got - 1025.0) / 1025.0 < 0.05


def test_reference_heat_terms():
    q_c, q_r, q_s = thermal.heat_terms(DRAKE, 40.0, 0.61, 90.0, 1000.0, 0.0)
    assert q_s == pytest.approx(0.8 * 1000 * 0.02814)
    assert q_r == pytest.approx(17.8 * 0.02814 * 0.8 * (3.73 ** 4 - 3.13 ** 4))
    assert q_c > q_r > q_s > 0


@pytest.mark.parametrize("ta, v, phi, g", [(25.0, 2.0, 30.0, 500.0), (-5.0, 0.0, 0.0, 0.0),
                                            (35.0, 8.0, 60.0, 900.0), (10.0, 0.3, 89.0, 0.0)])
def test_matches_hand_oracle_elsewhere(ta, v, phi, g):
    got = thermal.ampacity(DRAKE, WeatherSample(ta, v, phi, g), line_azimuth=0.0)
    assert got == pytest.approx(hand_rating(ta, v, phi, g), rel=1e-12)


def test_monotone_over_random_probes():
    rng = np.random.default_rng(0)
    n = 1000
    ta = rng.uniform(-20, 45, n)
    v = rng.uniform(0, 15, n)
    wd = rng.uniform(0, 360, n)
    g = rng.uniform(0, 1100, n)
    az = rng.uniform(0, 180, n)
    base = thermal.ampacity_array(DRAKE, ta, v, wd, g, az)
    assert np.all(np.isfinite(base)) and np.all(base >= 0)
    assert np.all(thermal.ampacity_array(DRAKE, ta, v + 0.5, wd, g, az) >= base)
    assert np.all(thermal.ampacity_array(DRAKE, ta + 1.0, v, wd, g, az) <= base)
    assert np.all(thermal.ampacity_array(DRAKE, ta, v, wd, g + 50.0, az) <= base)


def test_more_wind_strictly_raises_rating():
    lo = thermal.ampacity(DRAKE, WeatherSample(30.0, 0.6, 45.0, 800.0), 0.0)
    hi = thermal.ampacity(DRAKE, WeatherSample(30.0, 5.0, 45.0, 800.0), 0.0)
    assert hi > lo


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 359.9), st.floats(0, 179.9), st.floats(0.1, 10))
def test_wind_direction_half_turn_symmetry(wd, az, v):
    a = thermal.ampacity(DRAKE, WeatherSample(20.0, v, wd, 300.0), az)
    b = thermal.ampacity(DRAKE, WeatherSample(20.0, v, wd + 180.0, 300.0), az)
    assert a == pytest.approx(b, rel=1e-12)


def test_attack_angle_folds_to_quarter_turn():
    got = thermal.attack_angle(np.array([0, 45, 90, 135, 180, 270, 350]), 0.0)
    np.testing.assert_allclose(got, [0, 45, 90, 45, 0, 90, 10])


def test_rating_vanishes_as_ambient_approaches_limit():
    ratings = [thermal.ampacity(DRAKE, WeatherSample(100.0 - eps, 0.0, 0.0, 0.0), 0.0)
               for eps in (10.0, 1.0, 0.1, 0.01)]
    assert all(r > 0 for r in ratings)
    assert ratings == sorted(ratings, reverse=True)
    assert ratings[-1] < 0.05 * ratings[0]


@pytest.mark.parametrize("sample", [WeatherSample(100.0, 1.0, 0.0, 0.0), WeatherSample(120.0, 1.0, 0.0, 0.0),
                                    WeatherSample(20.0, -1.0, 0.0, 0.0), WeatherSample(20.0, 1.0, 0.0, -5.0)])
def test_invalid_weather_rejected(sample):
    with pytest.raises(ValueError):
        thermal.ampacity(DRAKE, sample, 0.0)


@pytest.mark.parametrize("kwargs", [{"diameter": 0.0}, {"emissivity": 1.5}, {"resistance": -1.0}])
def test_conductor_params_validated(kwargs):
    with pytest.raises(ValueError):
        ConductorParams(**kwargs)


def _weather(temp, wind, direction, solar):
    return {"ambient_temp": temp, "wind_speed": wind, "wind_direction": direction,
            "solar_radiation": solar}


def test_constant_weather_gives_constant_series():
    shape = (12, 3)
    out = thermal.dlr_series(DRAKE, _weather(np.full(shape, 25.0), np.full(shape, 2.0),
                                             np.full(shape, 45.0), np.full(shape, 600.0)),
                             azimuths=[0.0, 30.0, 90.0])
    assert out.shape == shape
    assert np.all(out == out[0])


def test_diurnal_series_minimum_at_hottest_stillest_hour():
    h = np.arange(24)
    temp = 25 + 8 * np.cos(2 * np.pi * (h - 15) / 24)
    wind = 3 - 2 * np.cos(2 * np.pi * (h - 15) / 24)
    solar = np.clip(900 * np.sin(np.pi * (h - 6) / 12), 0, None)
    out = thermal.dlr_series(DRAKE, _weather(temp[:, None], wind[:, None], np.full((24, 1), 90.0),
                                             solar[:, None]), azimuths=[0.0])
    oracle = [hand_rating(temp[k], wind[k], 90.0, solar[k]) for k in range(24)]
    assert out.shape == (24, 1)
    assert int(np.argmin(out[:, 0])) == int(np.argmin(oracle)) == 15


def test_empty_series():
    empty = np.zeros((0, 2))
    out = thermal.dlr_series(DRAKE, _weather(empty, empty, empty, empty), azimuths=[0.0, 0.0])
    assert out.shape == (0, 2)


def test_per_line_conductors():
    shape = (4, 2)
    w = _weather(np.full(shape, 20.0), np.full(shape, 1.0), np.zeros(shape), np.zeros(shape))
    thin = ConductorParams(diameter=0.015, resistance=2e-4)
    out = thermal.dlr_series([DRAKE, thin], w, azimuths=[90.0, 90.0])
    assert np.all(out[:, 1] < out[:, 0])
    np.testing.assert_array_equal(out[:, 0], thermal.dlr_series(DRAKE, w, [90.0, 90.0])[:, 0])


def test_misaligned_series_rejected():
    w = _weather(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        thermal.dlr_series(DRAKE, w, [0.0, 0.0])


def test_initial_bearing_cardinal_directions():
    assert thermal.initial_bearing(30, -97, 31, -97) == pytest.approx(0.0)
    assert thermal.initial_bearing(30, -97, 30, -96) == pytest.approx(90.0, abs=0.5)
    assert thermal.initial_bearing(31, -97, 30, -97) == pytest.approx(180.0)
