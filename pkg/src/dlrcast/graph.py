"""Grid topology, line-graph conversion and double-hop operators.

Buses carry node features, lines carry edge features.  Forecasting happens
per line, so the grid is turned into its line graph: one node per line,
two nodes adjacent when the lines share a bus.  Lines at line-graph
distance exactly two share no bus, which is what the double-hop operator
aggregates over.
"""
from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed grids (self-loops, parallel lines, dangling buses)."""


@dataclass(frozen=True)
class Bus:
    id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    length_km: float

    @property
    def endpoints(self) -> tuple[str, str]:
        """Endpoints sorted by bus id; this is the feature concatenation order."""
        return tuple(sorted((self.from_bus, self.to_bus)))  # type: ignore[return-value]


@dataclass(frozen=True)
class Grid:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    _bus_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        index = {}
        for k, bus in enumerate(self.buses):
            if bus.id in index:
                raise TopologyError(f"duplicate bus id {bus.id!r}")
            index[bus.id] = k
        object.__setattr__(self, "_bus_index", index)

        seen_lines = set()
        seen_pairs = {}
        for line in self.lines:
            if line.id in seen_lines:
                raise TopologyError(f"duplicate line id {line.id!r}")
            seen_lines.add(line.id)
            for b in (line.from_bus, line.to_bus):
                if b not in index:
                    raise TopologyError(f"line {line.id!r} references unknown bus {b!r}")
            if line.from_bus == line.to_bus:
                raise TopologyError(f"line {line.id!r} is a self-loop on {line.from_bus!r}")
            pair = frozenset((line.from_bus, line.to_bus))
            if pair in seen_pairs:
                raise TopologyError(
                    f"lines {seen_pairs[pair]!r} and {line.id!r} are parallel; "
                    "deduplicate before building the grid"
                )
            seen_pairs[pair] = line.id

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def bus_index(self, bus_id: str) -> int:
        return self._bus_index[bus_id]

    def line_index(self, line_id: str) -> int:
        for k, line in enumerate(self.lines):
            if line.id == line_id:
                return k
        raise KeyError(line_id)

    def endpoint_indices(self) -> np.ndarray:
        """(n_lines, 2) bus indices of each line's endpoints, in concatenation order."""
        return np.array(
            [[self._bus_index[b] for b in line.endpoints] for line in self.lines],
            dtype=np.intp,
        ).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {
            "buses": [{"id": b.id, "lat": b.lat, "lon": b.lon} for b in self.buses],
            "lines": [
                {"id": l.id, "from": l.from_bus, "to": l.to_bus, "length_km": l.length_km}
                for l in self.lines
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Grid":
        buses = [Bus(str(b["id"]), float(b["lat"]), float(b["lon"])) for b in doc["buses"]]
        lines = [
            Line(str(l["id"]), str(l["from"]), str(l["to"]), float(l["length_km"]))
            for l in doc["lines"]
        ]
        return cls(buses, lines)


def load_grid(path) -> Grid:
    with open(path) as fh:
        return Grid.from_dict(json.load(fh))


def save_grid(grid: Grid, path) -> None:
    with open(path, "w") as fh:
        json.dump(grid.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class LineGraphIndex:
    """Line graph L(G) of a grid plus the operators the cells mix with.

    ``adj1`` is the ordinary line-graph adjacency, ``adj2`` links nodes at
    shortest-path distance exactly two, and ``a_tilde`` is the normalized
    self-looped double-hop operator.  ``a_single`` is the same normalization
    applied to ``adj1`` and drives the single-hop baseline.
    """

    node_origin: tuple[str, ...]
    endpoints: tuple[tuple[str, str], ...]
    adj1: np.ndarray
    adj2: np.ndarray
    a_tilde: np.ndarray
    a_single: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.node_origin)

    def operator(self, hops: int) -> np.ndarray:
        if hops == 1:
            return self.a_single
        if hops == 2:
            return self.a_tilde
        raise ValueError(f"only 1- and 2-hop operators exist, got {hops}")


def line_adjacency(grid: Grid) -> np.ndarray:
    """Binary line-graph adjacency: lines i, j adjacent iff they share a bus."""
    n = grid.n_lines
    adj = np.zeros((n, n), dtype=np.int8)
    incident: dict[str, list[int]] = {}
    for k, line in enumerate(grid.lines):
        incident.setdefault(line.from_bus, []).append(k)
        incident.setdefault(line.to_bus, []).append(k)
    for members in incident.values():
        for a in members:
            for b in members:
                if a != b:
                    adj[a, b] = 1
    return adj


def double_hop_adjacency(adj1: np.ndarray) -> np.ndarray:
    """Nodes at BFS distance exactly 2 in the graph given by ``adj1``.

    Not the support of adj1 @ adj1: that would bring back the diagonal and
    any pair closing a triangle, i.e. pairs that are also distance 1.
    """
    adj1 = np.asarray(adj1)
    reach2 = (adj1.astype(np.int64) @ adj1.astype(np.int64)) > 0
    adj2 = reach2 & (adj1 == 0)
    np.fill_diagonal(adj2, False)
    return adj2.astype(np.int8)


def normalize_operator(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalization D^-1/2 (A + I) D^-1/2 with D the degree of A + I."""
    adj = np.asarray(adj, dtype=np.float64)
    a_hat = adj + np.eye(adj.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]


def to_line_graph(grid: Grid) -> LineGraphIndex:
    adj1 = line_adjacency(grid)
    adj2 = double_hop_adjacency(adj1)
    return LineGraphIndex(
        node_origin=tuple(line.id for line in grid.lines),
        endpoints=tuple(line.endpoints for line in grid.lines),
        adj1=adj1,
        adj2=adj2,
        a_tilde=normalize_operator(adj2),
        a_single=normalize_operator(adj1),
    )


def bfs_distances(adj: np.ndarray, source: int) -> np.ndarray:
    """Hop distances from ``source``; unreachable nodes get -1."""
    n = adj.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def assemble_line_features(
    grid: Grid, node_feats: np.ndarray, edge_feats: np.ndarray
) -> np.ndarray:
    """Per-line rows ``f_V(first) || f_V(second) || f_E(line)``.

    ``node_feats`` is (..., n_buses, n_v) and ``edge_feats`` is
    (..., n_lines, n_e); leading axes (e.g. time) must agree.  Endpoints are
    taken in ascending bus-id order.
    """
    node_feats = np.asarray(node_feats, dtype=np.float64)
    edge_feats = np.asarray(edge_feats, dtype=np.float64)
    if node_feats.ndim < 2 or edge_feats.ndim < 2:
        raise ValueError("node and edge features need at least 2 dimensions")
    if node_feats.shape[-2] != grid.n_buses:
        raise ValueError(
            f"node features cover {node_feats.shape[-2]} buses, grid has {grid.n_buses}"
        )
    if edge_feats.shape[-2] != grid.n_lines:
        raise ValueError(
            f"edge features cover {edge_feats.shape[-2]} lines, grid has {grid.n_lines}"
        )
    if node_feats.shape[:-2] != edge_feats.shape[:-2]:
        raise ValueError(
            f"leading axes differ: {node_feats.shape[:-2]} vs {edge_feats.shape[:-2]}"
        )
    ends = grid.endpoint_indices()
    first = node_feats[..., ends[:, 0], :]
    second = node_feats[..., ends[:, 1], :]
    return np.concatenate([first, second, edge_feats], axis=-1)


def export_adjacency_csv(matrix: np.ndarray, labels, path) -> None:
    """Write a square matrix as CSV with line ids on both axes."""
    labels = list(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + labels)
        for label, row in zip(labels, np.asarray(matrix)):
            writer.writerow([label] + [repr(float(v)) if row.dtype.kind == "f" else int(v) for v in row])


def export_line_graph(lg: LineGraphIndex, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("adj1", "adj2", "a_tilde"):
        path = out_dir / f"{name}.csv"
        export_adjacency_csv(getattr(lg, name), lg.node_origin, path)
        written.append(path)
    return written
