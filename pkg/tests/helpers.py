"""Shared builders and independent oracles for the test suite."""
import itertools

import numpy as np

from dlrcast import graph as gc


def grid_from_pairs(pairs, n_buses=None):
    ids = sorted({b for p in pairs for b in p}) if n_buses is None else [f"v{k:02d}" for k in range(n_buses)]
    buses = [gc.Bus(b, 30.0 + k * 0.1, -97.0 + k * 0.1) for k, b in enumerate(ids)]
    lines = [gc.Line(f"e{k:02d}", a, b, 10.0 + k) for k, (a, b) in enumerate(pairs)]
    return gc.Grid(buses, lines)


def random_connected_pairs(rng, n_buses, n_lines):
    """Random spanning tree plus extra distinct edges on buses v00..v{n-1}."""
    names = [f"v{k:02d}" for k in range(n_buses)]
    order = rng.permutation(n_buses)
    pairs = set()
    for k in range(1, n_buses):
        parent = order[rng.integers(0, k)]
        pairs.add(tuple(sorted((names[order[k]], names[parent]))))
    candidates = [p for p in itertools.combinations(names, 2) if p not in pairs]
    rng.shuffle(candidates)
    for p in candidates[: max(0, n_lines - len(pairs))]:
        pairs.add(p)
    pairs = sorted(pairs)
    rng.shuffle(pairs)
    return [tuple(p) for p in pairs]


def shared_endpoint_oracle(pairs):
    n = len(pairs)
    out = np.zeros((n, n), dtype=int)
    for i in range(n):
        for j in range(n):
            if i != j and set(pairs[i]) & set(pairs[j]):
                out[i, j] = 1
    return out


def bfs_distance2_oracle(adj1):
    """Distance-exactly-2 matrix from plain breadth-first searches."""
    n = len(adj1)
    out = np.zeros((n, n), dtype=int)
    for s in range(n):
        dist = {s: 0}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in range(n):
                    if adj1[u][v] and v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        for v, d in dist.items():
            if d == 2:
                out[s, v] = 1
    return out


# A pipeline small enough to run every CLI command in seconds.
TINY_CONFIG = {
    "grid": {"n_buses": 6, "n_lines": 8, "n_parallel": 1, "span_deg": 2.0},
    "weather": {"days": 12},
    "model": {"hidden": 4, "head_hidden": 4},
    "train": {"epochs": 2, "batch_size": 2},
    "seed": 3,
}


def write_config(path, doc=None):
    import json

    path.write_text(json.dumps(TINY_CONFIG if doc is None else doc))
    return str(path)
