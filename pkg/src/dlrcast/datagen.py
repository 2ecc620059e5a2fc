"""Synthetic weather over a grid, rating labels, and windowed datasets.

Feature layout per line-graph node (20 values):

    bus A: temp, wind_speed, sin(wind_dir), cos(wind_dir), solar, lat, lon
    bus B: same seven, B being the endpoint with the larger bus id
    line : previous-hour rating, length_km, spring, summer, fall, winter

Feature row ``k`` describes hour ``k + 1`` of the weather timeline (the
first hour is consumed by the previous-hour rating lag), and the aligned
target at row ``k`` is the rating at hour ``k + 1``.  A window starting at
row ``s`` uses rows ``s .. s+167`` as history and targets ``s+168 .. s+191``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from . import graph as gc
from . import thermal

HISTORY = 168
HORIZON = 24
BUS_FEATURES = ("temp", "wind_speed", "wind_dir_sin", "wind_dir_cos", "solar", "lat", "lon")
LINE_FEATURES = ("prev_rating", "length_km", "spring", "summer", "fall", "winter")
SEASONS = ("spring", "summer", "fall", "winter")
WEATHER_CHANNELS = ("ambient_temp", "wind_speed", "wind_direction", "solar_radiation")
EARTH_RADIUS_KM = 6371.0
TIME_FORMAT = "%Y-%m-%dT%H:%M"


def feature_names() -> list[str]:
    return ([f"from.{n}" for n in BUS_FEATURES] + [f"to.{n}" for n in BUS_FEATURES]
            + list(LINE_FEATURES))


def schema_hash() -> str:
    return hashlib.sha256(",".join(feature_names()).encode()).hexdigest()[:16]


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def season_index(ts: datetime) -> int:
    """0 spring (Mar-May), 1 summer (Jun-Aug), 2 fall (Sep-Nov), 3 winter."""
    return {3: 0, 4: 0, 5: 0, 6: 1, 7: 1, 8: 1, 9: 2, 10: 2, 11: 2}.get(ts.month, 3)


def season_one_hot(ts: datetime) -> np.ndarray:
    out = np.zeros(4)
    out[season_index(ts)] = 1.0
    return out


# -- topology ----------------------------------------------------------------

def dedup_parallel_lines(lines):
    """Keep the first line of every unordered endpoint pair."""
    kept, seen = [], set()
    for line in lines:
        pair = frozenset((line.from_bus, line.to_bus))
        if pair in seen:
            continue
        seen.add(pair)
        kept.append(line)
    return kept


def load_topology(path) -> tuple[gc.Grid, int]:
    """Read a topology JSON that may list parallel lines; returns (grid, raw line count)."""
    with open(path) as fh:
        doc = json.load(fh)
    buses = [gc.Bus(str(b["id"]), float(b["lat"]), float(b["lon"])) for b in doc["buses"]]
    lines = [gc.Line(str(l["id"]), str(l["from"]), str(l["to"]), float(l["length_km"]))
             for l in doc["lines"]]
    return gc.Grid(buses, dedup_parallel_lines(lines)), len(lines)


def save_topology(buses, lines, path) -> None:
    """Write buses and lines (parallels allowed) in the ``load_topology`` format."""
    doc = {
        "buses": [{"id": b.id, "lat": b.lat, "lon": b.lon} for b in buses],
        "lines": [{"id": l.id, "from": l.from_bus, "to": l.to_bus, "length_km": l.length_km}
                  for l in lines],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def synthetic_topology(n_buses: int, n_lines: int, n_parallel: int = 0, seed: int = 0,
                       center=(31.0, -97.0), span_deg=4.0):
    """Random connected grid: spanning tree over scattered buses, then the
    shortest missing links until ``n_lines`` distinct corridors exist, then
    ``n_parallel`` duplicate circuits on random corridors.

    Returns (buses, lines) with the duplicates still present.
    """
    if n_buses < 2:
        raise ValueError("need at least two buses")
    max_lines = n_buses * (n_buses - 1) // 2
    if not n_buses - 1 <= n_lines <= max_lines:
        raise ValueError(f"n_lines must be in [{n_buses - 1}, {max_lines}]")
    rng = np.random.default_rng(seed)
    lat = center[0] + rng.uniform(-span_deg / 2, span_deg / 2, n_buses)
    lon = center[1] + rng.uniform(-span_deg / 2, span_deg / 2, n_buses)
    width = len(str(n_buses))
    buses = [gc.Bus(f"B{k + 1:0{width}d}", round(float(a), 5), round(float(o), 5))
             for k, (a, o) in enumerate(zip(lat, lon))]
    dist = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])

    mst = minimum_spanning_tree(dist).tocoo()
    pairs = {tuple(sorted((int(i), int(j)))) for i, j in zip(mst.row, mst.col)}
    iu, ju = np.triu_indices(n_buses, k=1)
    for k in np.argsort(dist[iu, ju], kind="stable"):
        if len(pairs) >= n_lines:
            break
        pairs.add((int(iu[k]), int(ju[k])))
    pairs = sorted(pairs)
    lines = []
    width = len(str(n_lines + n_parallel))
    for k, (i, j) in enumerate(pairs):
        lines.append(gc.Line(f"L{k + 1:0{width}d}", buses[i].id, buses[j].id,
                             round(float(dist[i, j]) * 1.1, 3)))
    for extra in rng.choice(len(pairs), size=n_parallel, replace=n_parallel > len(pairs)):
        base = lines[int(extra)]
        lines.append(gc.Line(f"L{len(lines) + 1:0{width}d}", base.from_bus, base.to_bus,
                             base.length_km))
    return buses, lines


# -- weather -----------------------------------------------------------------

@dataclass(frozen=True)
class WeatherField:
    """Hourly per-bus weather; every array is (hours, n_buses)."""

    start: datetime
    ambient_temp: np.ndarray
    wind_speed: np.ndarray
    wind_direction: np.ndarray
    solar_radiation: np.ndarray

    @property
    def hours(self) -> int:
        return self.ambient_temp.shape[0]

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(hours=h) for h in range(self.hours)]

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)


def spatial_factor(grid: gc.Grid, length_scale_km: float) -> np.ndarray:
    """Square root of the exp(-distance / length_scale) bus covariance."""
    lat = np.array([b.lat for b in grid.buses])
    lon = np.array([b.lon for b in grid.buses])
    dist = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    cov = np.exp(-dist / length_scale_km)
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _correlated_noise(rng, factor, hours, phi):
    """AR(1) in time with unit marginal variance, spatially mixed by ``factor``."""
    n = factor.shape[0]
    shocks = rng.standard_normal((hours, n)) @ factor.T
    out = np.empty((hours, n))
    out[0] = shocks[0]
    scale = math.sqrt(1.0 - phi * phi)
    for t in range(1, hours):
        out[t] = phi * out[t - 1] + scale * shocks[t]
    return out


def _drift(noise, lags):
    """Delay each bus column by its lag in hours (eastward-moving weather)."""
    hours = noise.shape[0] - int(lags.max())
    base = int(lags.max())
    return np.stack([noise[base - lag: base - lag + hours, k] for k, lag in enumerate(lags)], axis=1)


def generate_weather(grid: gc.Grid, days: int, seed: int, start: datetime | str = "2021-06-01T00:00",
                     length_scale_km: float = 100.0, drift_hours_per_degree: float = 3.0) -> WeatherField:
    """Seasonal + diurnal cycles plus spatially correlated AR(1) anomalies.

    Anomaly fields drift eastward: a bus ``x`` degrees east of the western
    edge sees the shared pattern ``x * drift_hours_per_degree`` hours later.
    """
    if days < 8:
        raise ValueError(f"need >= 8 days of weather to form one window, got {days}")
    if isinstance(start, str):
        start = datetime.strptime(start, TIME_FORMAT)
    hours = days * 24
    rng = np.random.default_rng(seed)
    factor = spatial_factor(grid, length_scale_km)
    lat = np.array([b.lat for b in grid.buses])
    lon = np.array([b.lon for b in grid.buses])
    lags = np.rint((lon - lon.min()) * drift_hours_per_degree).astype(int)
    pad = int(lags.max())

    noise = {}
    for name, phi in (("temp", 0.97), ("wind", 0.9), ("dir", 0.98), ("cloud", 0.95)):
        noise[name] = _drift(_correlated_noise(rng, factor, hours + pad, phi), lags)

    t = np.arange(hours)
    stamps = [start + timedelta(hours=int(h)) for h in t]
    hour_of_day = np.array([s.hour for s in stamps], dtype=float)[:, None]
    doy = np.array([s.timetuple().tm_yday for s in stamps], dtype=float)[:, None]
    seasonal = -np.cos(2 * np.pi * (doy - 15.0) / 365.25)  # -1 mid-January, +1 mid-July

    temp = (19.0 - 0.8 * (lat[None, :] - 31.0) + 10.0 * seasonal
            + 6.0 * np.cos(2 * np.pi * (hour_of_day - 15.0) / 24.0) + 3.0 * noise["temp"])
    wind = (4.0 - 0.5 * seasonal + 1.5 * np.cos(2 * np.pi * (hour_of_day - 14.0) / 24.0)
            + 1.8 * noise["wind"])
    wind = np.maximum(wind, 0.0)
    direction = np.mod(180.0 + 20.0 * seasonal + 70.0 * noise["dir"], 360.0)
    clear_sky = (850.0 + 150.0 * seasonal) * np.clip(np.sin(np.pi * (hour_of_day - 6.0) / 12.0), 0.0, None)
    clear_sky = np.where((hour_of_day > 6) & (hour_of_day < 18), clear_sky, 0.0)
    cloud = np.clip(0.75 + 0.3 * noise["cloud"], 0.0, 1.0)
    solar = np.broadcast_to(clear_sky, (hours, grid.n_buses)) * cloud

    return WeatherField(start, temp, wind, direction, np.ascontiguousarray(solar))


def line_weather(grid: gc.Grid, field: WeatherField) -> dict:
    """Endpoint-averaged weather per line; wind direction averaged as a vector."""
    ends = grid.endpoint_indices()
    a, b = ends[:, 0], ends[:, 1]
    out = {
        "ambient_temp": 0.5 * (field.ambient_temp[:, a] + field.ambient_temp[:, b]),
        "wind_speed": 0.5 * (field.wind_speed[:, a] + field.wind_speed[:, b]),
        "solar_radiation": 0.5 * (field.solar_radiation[:, a] + field.solar_radiation[:, b]),
    }
    rad = np.radians(field.wind_direction)
    s = np.sin(rad[:, a]) + np.sin(rad[:, b])
    c = np.cos(rad[:, a]) + np.cos(rad[:, b])
    out["wind_direction"] = np.mod(np.degrees(np.arctan2(s, c)), 360.0)
    return out


def line_azimuths(grid: gc.Grid) -> np.ndarray:
    out = []
    for line in grid.lines:
        a = grid.buses[grid.bus_index(line.from_bus)]
        b = grid.buses[grid.bus_index(line.to_bus)]
        out.append(thermal.initial_bearing(a.lat, a.lon, b.lat, b.lon))
    return np.array(out)


def compute_ratings(grid: gc.Grid, field: WeatherField, conductor) -> np.ndarray:
    """(hours, n_lines) ratings in amperes."""
    return thermal.dlr_series(conductor, line_weather(grid, field), line_azimuths(grid))


# -- features and windows ----------------------------------------------------

def bus_feature_tensor(grid: gc.Grid, field: WeatherField) -> np.ndarray:
    """(hours, n_buses, 7) bus features."""
    rad = np.radians(field.wind_direction)
    hours = field.hours
    lat = np.broadcast_to([b.lat for b in grid.buses], (hours, grid.n_buses))
    lon = np.broadcast_to([b.lon for b in grid.buses], (hours, grid.n_buses))
    return np.stack([field.ambient_temp, field.wind_speed, np.sin(rad), np.cos(rad),
                     field.solar_radiation, lat, lon], axis=-1)


def build_features(grid: gc.Grid, field: WeatherField, ratings: np.ndarray):
    """Return (features (hours-1, n_lines, 20), targets (hours-1, n_lines)).

    Row k covers hour k + 1: that hour's weather, the rating of hour k, and
    the season of hour k + 1; target row k is the rating at hour k + 1.
    """
    ratings = np.asarray(ratings, dtype=np.float64)
    if ratings.shape != (field.hours, grid.n_lines):
        raise ValueError(f"ratings shape {ratings.shape}, expected {(field.hours, grid.n_lines)}")
    if field.ambient_temp.shape != (field.hours, grid.n_buses):
        raise ValueError("weather field does not cover every bus")
    node = bus_feature_tensor(grid, field)[1:]
    stamps = field.timestamps()[1:]
    seasons = np.array([season_one_hot(ts) for ts in stamps])
    n_rows = field.hours - 1
    lengths = np.array([line.length_km for line in grid.lines])
    edge = np.concatenate([
        ratings[:-1, :, None],
        np.broadcast_to(lengths[None, :, None], (n_rows, grid.n_lines, 1)),
        np.broadcast_to(seasons[:, None, :], (n_rows, grid.n_lines, 4)),
    ], axis=-1)
    features = gc.assemble_line_features(grid, node, edge)
    return features, ratings[1:].copy()


def window_starts(n_rows: int, history: int = HISTORY, horizon: int = HORIZON, stride: int = 24):
    return list(range(0, n_rows - history - horizon + 1, stride))


@dataclass(frozen=True)
class WindowedDataset:
    """z-scored history windows with raw targets.

    ``x`` is (N, history, n_lines, 20); ``y`` is (N, n_lines, horizon) in
    amperes; ``starts`` are feature-row indices of each window.
    """

    x: np.ndarray
    y: np.ndarray
    starts: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    history: int = HISTORY
    horizon: int = HORIZON

    def __len__(self):
        return len(self.x)

    def target_rows(self, k: int) -> range:
        s = int(self.starts[k]) + self.history
        return range(s, s + self.horizon)


def _stack_windows(features, targets, starts, history, horizon):
    x = np.stack([features[s: s + history] for s in starts]) if starts else np.empty((0,))
    y = np.stack([targets[s + history: s + history + horizon].T for s in starts]) if starts else np.empty((0,))
    return x, y


def window_split(features, targets, train_ratio: float = 0.8, stride: int = 24,
                 history: int = HISTORY, horizon: int = HORIZON):
    """Chronological split of stride-spaced windows into train and test sets.

    The earliest ``floor(train_ratio * N)`` windows train.  Normalization
    statistics come from the stacked training histories only; features
    with zero spread there are centred but left unscaled.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.shape[:2] != targets.shape:
        raise ValueError(f"features {features.shape[:2]} and targets {targets.shape} are misaligned")
    starts = window_starts(len(features), history, horizon, stride)
    if len(starts) < 2:
        raise ValueError(f"need at least 2 windows, data only holds {len(starts)}")
    n_train = int(math.floor(train_ratio * len(starts) + 1e-9))
    n_train = min(max(n_train, 1), len(starts) - 1)
    train_starts, test_starts = starts[:n_train], starts[n_train:]

    x_tr, y_tr = _stack_windows(features, targets, train_starts, history, horizon)
    x_te, y_te = _stack_windows(features, targets, test_starts, history, horizon)
    flat = x_tr.reshape(-1, features.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)

    def make(x, y, st):
        return WindowedDataset((x - mean) / std, y, np.array(st, dtype=np.int64), mean, std,
                               history, horizon)

    return make(x_tr, y_tr, train_starts), make(x_te, y_te, test_starts)


# -- CSV / manifest I/O ------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_weather_csv(grid: gc.Grid, field: WeatherField, path) -> None:
    stamps = [ts.strftime(TIME_FORMAT) for ts in field.timestamps()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "timestamp", *WEATHER_CHANNELS])
        for k, bus in enumerate(grid.buses):
            cols = [field.channel(c)[:, k] for c in WEATHER_CHANNELS]
            for h, ts in enumerate(stamps):
                w.writerow([bus.id, ts, *(_fmt(col[h]) for col in cols)])


def read_weather_csv(grid: gc.Grid, path) -> WeatherField:
    per_bus: dict[str, list] = {}
    stamps: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            per_bus.setdefault(row["bus_id"], []).append([float(row[c]) for c in WEATHER_CHANNELS])
            stamps.setdefault(row["bus_id"], []).append(row["timestamp"])
    missing = [b.id for b in grid.buses if b.id not in per_bus]
    if missing:
        raise ValueError(f"weather file lacks buses {missing[:5]}")
    timeline = stamps[grid.buses[0].id]
    for b in grid.buses:
        if stamps[b.id] != timeline:
            raise ValueError(f"bus {b.id} timeline differs from {grid.buses[0].id}")
    data = np.stack([np.array(per_bus[b.id]) for b in grid.buses], axis=1)  # (hours, buses, 4)
    start = datetime.strptime(timeline[0], TIME_FORMAT)
    return WeatherField(start, *(np.ascontiguousarray(data[:, :, c]) for c in range(4)))


def write_ratings_csv(grid: gc.Grid, start: datetime, ratings: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "timestamp", "rating_A"])
        for k, line in enumerate(grid.lines):
            for h in range(ratings.shape[0]):
                ts = (start + timedelta(hours=h)).strftime(TIME_FORMAT)
                w.writerow([line.id, ts, _fmt(ratings[h, k])])


def read_ratings_csv(grid: gc.Grid, path) -> np.ndarray:
    per_line: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            per_line.setdefault(row["line_id"], []).append(float(row["rating_A"]))
    missing = [l.id for l in grid.lines if l.id not in per_line]
    if missing:
        raise ValueError(f"ratings file lacks lines {missing[:5]}")
    lengths = {len(per_line[l.id]) for l in grid.lines}
    if len(lengths) != 1:
        raise ValueError("ratings series have different lengths")
    return np.stack([np.array(per_line[l.id]) for l in grid.lines], axis=1)


def dataset_manifest(grid: gc.Grid, raw_line_count: int, field: WeatherField, train, test,
                     stride: int, train_ratio: float, conductor: thermal.ConductorParams,
                     extra: dict | None = None) -> dict:
    doc = {
        "n_buses": grid.n_buses,
        "n_lines_raw": raw_line_count,
        "n_lines": grid.n_lines,
        "line_ids": [l.id for l in grid.lines],
        "start": field.start.strftime(TIME_FORMAT),
        "hours": field.hours,
        "history": HISTORY,
        "horizon": HORIZON,
        "stride": stride,
        "train_ratio": train_ratio,
        "n_train_windows": len(train) if train is not None else 0,
        "n_test_windows": len(test) if test is not None else 0,
        "train_starts": [int(s) for s in train.starts] if train is not None else [],
        "test_starts": [int(s) for s in test.starts] if test is not None else [],
        "feature_alignment": "feature row k = hour k+1; prev_rating is the rating at hour k",
        "features": feature_names(),
        "feature_schema_hash": schema_hash(),
        "endpoint_order": "ascending bus id",
        "season_order": list(SEASONS),
        "feature_normalization": {
            "method": "z-score over stacked training histories; zero-spread features use std 1",
            "mean": [float(v) for v in train.feature_mean] if train is not None else None,
            "std": [float(v) for v in train.feature_std] if train is not None else None,
        },
        "target_normalization": "per-line min/max over training targets, fitted by the model",
        "conductor": {
            "diameter": conductor.diameter,
            "resistance": conductor.resistance,
            "emissivity": conductor.emissivity,
            "absorptivity": conductor.absorptivity,
            "max_temp": conductor.max_temp,
        },
    }
    if extra:
        doc.update(extra)
    return doc
