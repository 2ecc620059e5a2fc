from datetime import datetime

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

from dlrcast import datagen as dg
from dlrcast import graph as gc
from dlrcast import thermal


@pytest.fixture(scope="module")
def demo():
    buses, lines = dg.synthetic_topology(12, 18, 2, seed=4)
    grid = gc.Grid(buses, dg.dedup_parallel_lines(lines))
    field = dg.generate_weather(grid, 12, seed=4)
    ratings = dg.compute_ratings(grid, field, thermal.ConductorParams())
    return grid, field, ratings


def test_synthetic_topology_shape():
    buses, lines = dg.synthetic_topology(20, 30, 2, seed=7)
    assert len(buses) == 20 and len(lines) == 32
    grid = gc.Grid(buses, dg.dedup_parallel_lines(lines))
    assert grid.n_lines == 30
    ends = grid.endpoint_indices()
    adj = np.zeros((20, 20))
    adj[ends[:, 0], ends[:, 1]] = adj[ends[:, 1], ends[:, 0]] = 1
    assert connected_components(adj, directed=False)[0] == 1


def test_dedup_keeps_one_per_endpoint_pair(tmp_path):
    buses, lines = dg.synthetic_topology(6, 7, 3, seed=1)
    dg.save_topology(buses, lines, tmp_path / "t.json")
    grid, raw = dg.load_topology(tmp_path / "t.json")
    assert raw == 10 and grid.n_lines == 7
    pairs = [frozenset((l.from_bus, l.to_bus)) for l in grid.lines]
    assert len(set(pairs)) == len(pairs)
    with pytest.raises(gc.TopologyError, match="parallel"):
        gc.Grid(buses, lines)


def test_weather_deterministic(demo):
    grid, field, _ = demo
    again = dg.generate_weather(grid, 12, seed=4)
    for name in dg.WEATHER_CHANNELS:
        np.testing.assert_array_equal(field.channel(name), again.channel(name))
    other = dg.generate_weather(grid, 12, seed=5)
    assert not np.array_equal(field.ambient_temp, other.ambient_temp)


def test_weather_physical_ranges(demo):
    _, field, _ = demo
    assert field.ambient_temp.shape == (12 * 24, 12)
    assert np.all(field.wind_speed >= 0)
    assert np.all(field.solar_radiation >= 0)
    hours = np.array([ts.hour for ts in field.timestamps()])
    night = (hours <= 6) | (hours >= 18)
    assert np.all(field.solar_radiation[night] == 0)
    assert np.all((field.wind_direction >= 0) & (field.wind_direction < 360))


def test_co_located_buses_share_weather():
    buses = [gc.Bus("a", 31.0, -97.0), gc.Bus("b", 31.0, -97.0), gc.Bus("c", 32.0, -96.0)]
    lines = [gc.Line("x", "a", "c", 100.0), gc.Line("y", "b", "c", 100.0)]
    field = dg.generate_weather(gc.Grid(buses, lines), 10, seed=0)
    np.testing.assert_allclose(field.ambient_temp[:, 0], field.ambient_temp[:, 1], atol=1e-6)
    np.testing.assert_allclose(field.wind_speed[:, 0], field.wind_speed[:, 1], atol=1e-6)
    assert np.corrcoef(field.ambient_temp[:, 0], field.ambient_temp[:, 1])[0, 1] > 0.999


def test_temperature_correlation_decays_with_distance():
    buses, lines = dg.synthetic_topology(15, 20, seed=2, span_deg=6.0)
    grid = gc.Grid(buses, lines)
    field = dg.generate_weather(grid, 42, seed=2)  # 1008 hours
    corr = np.corrcoef(field.ambient_temp.T)
    lat = np.array([b.lat for b in buses])
    lon = np.array([b.lon for b in buses])
    dist = dg.haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    iu = np.triu_indices(len(buses), k=1)
    assert spearmanr(dist[iu], corr[iu]).statistic < 0


def test_too_few_days_rejected(demo):
    with pytest.raises(ValueError, match="8 days"):
        dg.generate_weather(demo[0], 5, seed=0)


def test_wind_direction_encoding():
    buses = [gc.Bus("a", 31.0, -97.0), gc.Bus("b", 31.5, -97.0)]
    grid = gc.Grid(buses, [gc.Line("x", "a", "b", 50.0)])
    field = dg.WeatherField(datetime(2021, 1, 5), np.full((2, 2), 10.0), np.ones((2, 2)),
                            np.full((2, 2), 90.0), np.zeros((2, 2)))
    feats = dg.bus_feature_tensor(grid, field)
    np.testing.assert_allclose(feats[0, 0, 2:4], [1.0, 0.0], atol=1e-15)


def test_january_is_winter():
    np.testing.assert_array_equal(dg.season_one_hot(datetime(2021, 1, 15)), [0, 0, 0, 1])
    assert dg.SEASONS == ("spring", "summer", "fall", "winter")


def test_feature_rows(demo):
    grid, field, ratings = demo
    features, targets = dg.build_features(grid, field, ratings)
    assert features.shape == (field.hours - 1, grid.n_lines, 20)
    assert len(dg.feature_names()) == 20
    node = dg.bus_feature_tensor(grid, field)
    ends = grid.endpoint_indices()
    k = 37  # row k describes hour k + 1
    for line in range(grid.n_lines):
        a, b = ends[line]
        np.testing.assert_array_equal(features[k, line, 0:7], node[k + 1, a])
        np.testing.assert_array_equal(features[k, line, 7:14], node[k + 1, b])
        assert features[k, line, 14] == ratings[k, line]  # previous-hour rating
        assert features[k, line, 15] == grid.lines[line].length_km
        assert targets[k, line] == ratings[k + 1, line]


def test_targets_regenerate_from_thermal(demo):
    grid, field, ratings = demo
    _, targets = dg.build_features(grid, field, ratings)
    lw = dg.line_weather(grid, field)
    az = dg.line_azimuths(grid)
    h, j = 100, 3
    rating = thermal.ampacity(thermal.ConductorParams(),
                              thermal.WeatherSample(lw["ambient_temp"][h, j], lw["wind_speed"][h, j],
                                                    lw["wind_direction"][h, j], lw["solar_radiation"][h, j]),
                              az[j])
    assert targets[h - 1, j] == pytest.approx(rating, rel=1e-12)


def test_misaligned_series_rejected(demo):
    grid, field, ratings = demo
    with pytest.raises(ValueError):
        dg.build_features(grid, field, ratings[:-1])


def test_window_arithmetic_for_forty_days():
    rows = 40 * 24 - 1
    starts = dg.window_starts(rows)
    assert len(starts) == 32
    assert starts[0] == 0 and starts[-1] == 744


def test_split_ten_windows_chronological():
    rows = 9 * 24 + 192  # ten stride-24 windows
    rng = np.random.default_rng(0)
    feats, targets = rng.normal(size=(rows, 3, 20)), rng.normal(size=(rows, 3))
    train, test = dg.window_split(feats, targets)
    assert (len(train), len(test)) == (8, 2)
    assert train.starts.max() < test.starts.min()


def test_split_needs_two_windows():
    with pytest.raises(ValueError):
        dg.window_split(np.zeros((192, 2, 20)), np.zeros((192, 2)))


def test_normalization_uses_training_split_only(demo):
    grid, field, ratings = demo
    features, targets = dg.build_features(grid, field, ratings)
    train, test = dg.window_split(features, targets, stride=12)
    flat = train.x.reshape(-1, 20)
    np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-6)
    spread = train.feature_std != 1.0
    np.testing.assert_allclose(flat.std(axis=0)[spread], 1.0, atol=1e-6)
    # test windows reuse the training statistics
    raw = features[test.starts[0]: test.starts[0] + 168]
    np.testing.assert_allclose(test.x[0], (raw - train.feature_mean) / train.feature_std)
    np.testing.assert_array_equal(test.y[0], targets[test.starts[0] + 168: test.starts[0] + 192].T)


def test_no_test_timestamp_precedes_training(demo):
    grid, field, ratings = demo
    features, targets = dg.build_features(grid, field, ratings)
    train, test = dg.window_split(features, targets)
    # histories may overlap; targets and window starts may not
    first_test_target = min(test.target_rows(k)[0] for k in range(len(test)))
    last_train_target = max(train.target_rows(k)[-1] for k in range(len(train)))
    assert first_test_target > last_train_target
    assert min(test.starts) > max(train.starts)


def test_csv_round_trip_is_exact(demo, tmp_path):
    grid, field, ratings = demo
    dg.write_weather_csv(grid, field, tmp_path / "w.csv")
    dg.write_ratings_csv(grid, field.start, ratings, tmp_path / "r.csv")
    back = dg.read_weather_csv(grid, tmp_path / "w.csv")
    assert back.start == field.start
    for name in dg.WEATHER_CHANNELS:
        np.testing.assert_array_equal(back.channel(name), field.channel(name))
    np.testing.assert_array_equal(dg.read_ratings_csv(grid, tmp_path / "r.csv"), ratings)
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "line_id,timestamp,rating_A"


def test_manifest_describes_features(demo):
    grid, field, ratings = demo
    features, targets = dg.build_features(grid, field, ratings)
    train, test = dg.window_split(features, targets)
    doc = dg.dataset_manifest(grid, grid.n_lines + 2, field, train, test, 24, 0.8,
                              thermal.ConductorParams())
    assert doc["n_lines"] == grid.n_lines and doc["n_lines_raw"] == grid.n_lines + 2
    assert doc["features"] == dg.feature_names()
    assert len(doc["feature_normalization"]["mean"]) == 20
    assert doc["feature_schema_hash"] == dg.schema_hash()
