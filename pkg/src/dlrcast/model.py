"""Recurrent cells with graph-mixed inputs and per-line quantile heads.

All three variants share one cell: gates read ``A @ X_t`` (the mixed
input) and the untouched previous hidden state.  They differ only in the
operator ``A`` and the depth:

=============  ==========================  ======
variant        input operator              layers
=============  ==========================  ======
lstm           none (each line alone)      1
lgclstm        normalized single-hop       2
d-lgclstm      normalized double-hop       1
=============  ==========================  ======
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

VARIANTS = ("lstm", "lgclstm", "d-lgclstm")
GATES = ("f", "i", "o", "g")

_VARIANT_LAYOUT = {
    "lstm": (1, 0),
    "lgclstm": (2, 1),
    "d-lgclstm": (1, 2),
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "d-lgclstm"
    input_dim: int = 20
    hidden: int = 64
    head_hidden: int = 64
    horizon: int = 24
    quantiles: tuple = (0.1, 0.9)
    bidirectional: bool = True
    cell_activation: str = "sigmoid"
    shared_heads: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        q_lo, q_hi = self.quantiles
        if not 0.0 < q_lo < q_hi < 1.0:
            raise ValueError(f"need 0 < Q_L < Q_U < 1, got {self.quantiles}")
        if self.cell_activation not in ("sigmoid", "tanh"):
            raise ValueError("cell_activation is 'sigmoid' or 'tanh'")
        for name in ("input_dim", "hidden", "head_hidden", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "quantiles", (float(q_lo), float(q_hi)))

    @property
    def n_layers(self) -> int:
        return _VARIANT_LAYOUT[self.variant][0]

    @property
    def hops(self) -> int:
        """0 means no graph mixing."""
        return _VARIANT_LAYOUT[self.variant][1]

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d


def init_cell(rng: np.random.Generator, input_dim: int, hidden: int, prefix: str = "") -> dict:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget bias +1."""
    params = {}
    for gate in GATES:
        bound = 1.0 / math.sqrt(input_dim)
        params[f"{prefix}W_{gate}"] = rng.uniform(-bound, bound, size=(input_dim, hidden))
    for gate in GATES:
        bound = 1.0 / math.sqrt(hidden)
        params[f"{prefix}U_{gate}"] = rng.uniform(-bound, bound, size=(hidden, hidden))
    for gate in GATES:
        params[f"{prefix}b_{gate}"] = np.full((1, hidden), 1.0 if gate == "f" else 0.0)
    return params


class FusedCell:
    """Gate weights concatenated once per sequence so each step is two matmuls."""

    def __init__(self, params: dict, prefix: str = ""):
        self.W = ad.concat_cols([params[f"{prefix}W_{g}"] for g in GATES])
        self.U = ad.concat_cols([params[f"{prefix}U_{g}"] for g in GATES])
        self.b = ad.concat_cols([params[f"{prefix}b_{g}"] for g in GATES])
        self.hidden = self.U.shape[0]


def cell_step(cell: FusedCell, a_tilde, x_prev, h_prev, c_prev, n_nodes: int,
              cell_activation: str = "sigmoid"):
    """One recurrent step; returns (H_t, c_t).

    ``a_tilde=None`` skips mixing altogether (the plain per-line LSTM).
    Mixing only touches the input term, never ``h_prev``.
    """
    mixed = x_prev if a_tilde is None else ad.graph_mix(a_tilde, x_prev, n_nodes)
    pre = ad.add_bias(ad.add(ad.matmul(mixed, cell.W), ad.matmul(h_prev, cell.U)), cell.b)
    h = cell.hidden
    f = ad.sigmoid(ad.slice_cols(pre, 0, h))
    i = ad.sigmoid(ad.slice_cols(pre, h, 2 * h))
    o = ad.sigmoid(ad.slice_cols(pre, 2 * h, 3 * h))
    g = ad.tanh(ad.slice_cols(pre, 3 * h, 4 * h))
    c = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, g))
    squash = ad.sigmoid(c) if cell_activation == "sigmoid" else ad.tanh(c)
    return ad.hadamard(o, squash), c


def run_sequence(cells, a_tilde, inputs, n_nodes: int, cell_activation: str = "sigmoid"):
    """Unroll a stack of cells over ``inputs`` (list of (rows, d) tensors) in order.

    Returns the top layer's hidden state after the last input.
    """
    if not inputs:
        raise ValueError("empty history")
    rows = inputs[0].shape[0]
    seq = inputs
    h = None
    for cell in cells:
        h = Tensor(np.zeros((rows, cell.hidden)))
        c = Tensor(np.zeros((rows, cell.hidden)))
        outputs = []
        for x in seq:
            h, c = cell_step(cell, a_tilde, x, h, c, n_nodes, cell_activation)
            outputs.append(h)
        seq = outputs
    return h


def run_bidirectional(fwd_cells, bwd_cells, a_tilde, inputs, n_nodes: int,
                      cell_activation: str = "sigmoid"):
    """Forward stack reads t = 1..T, backward stack reads t = T..1.

    Returns (h_fwd_T, h_bwd_T); the backward state is None when
    ``bwd_cells`` is empty.
    """
    h_fwd = run_sequence(fwd_cells, a_tilde, inputs, n_nodes, cell_activation)
    h_bwd = None
    if bwd_cells:
        h_bwd = run_sequence(bwd_cells, a_tilde, inputs[::-1], n_nodes, cell_activation)
    return h_fwd, h_bwd


def head_shapes(config: ModelConfig, n_lines: int) -> dict:
    """Parameter shapes for the two quantile heads."""
    d_in = config.hidden * config.directions
    hh, tau = config.head_hidden, config.horizon
    shapes = {}
    for bound in ("L", "U"):
        if config.shared_heads:
            shapes[f"head_{bound}.W1"] = (d_in, hh)
            shapes[f"head_{bound}.b1"] = (1, hh)
            shapes[f"head_{bound}.W2"] = (hh, tau)
            shapes[f"head_{bound}.b2"] = (1, tau)
        else:
            shapes[f"head_{bound}.W1"] = (n_lines * d_in, hh)
            shapes[f"head_{bound}.b1"] = (n_lines, hh)
            shapes[f"head_{bound}.W2"] = (n_lines * hh, tau)
            shapes[f"head_{bound}.b2"] = (n_lines, tau)
    return shapes


def apply_head(params: dict, bound: str, features, n_lines: int, shared: bool):
    """Two affine layers with tanh between, one set per line unless shared."""
    p = lambda name: params[f"head_{bound}.{name}"]  # noqa: E731
    if shared:
        hidden = ad.tanh(ad.add_bias(ad.matmul(features, p("W1")), p("b1")))
        return ad.add_bias(ad.matmul(hidden, p("W2")), p("b2"))
    hidden = ad.tanh(ad.linewise_affine(features, p("W1"), p("b1"), n_lines))
    return ad.linewise_affine(hidden, p("W2"), p("b2"), n_lines)


def quantile_forecast(params: dict, h_fwd, h_bwd, n_lines: int, shared: bool = False):
    """Lower and upper trajectories (rows, horizon) from the final hidden states.

    Heads read ``h_bwd || h_fwd``.
    """
    features = h_fwd if h_bwd is None else ad.concat_cols([h_bwd, h_fwd])
    lower = apply_head(params, "L", features, n_lines, shared)
    upper = apply_head(params, "U", features, n_lines, shared)
    return lower, upper


def order_bounds(lower: np.ndarray, upper: np.ndarray):
    """Swap crossed bounds elementwise; returns (lower, upper, crossing_fraction)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    crossed = lower > upper
    rate = float(crossed.mean()) if crossed.size else 0.0
    return np.minimum(lower, upper), np.maximum(lower, upper), rate


class QuantileNetwork:
    """Parameter container and forward pass for one variant on one line graph."""

    def __init__(self, config: ModelConfig, n_lines: int, operator=None, seed: int = 0):
        if config.hops and operator is None:
            raise ValueError(f"variant {config.variant} needs a graph operator")
        self.config = config
        self.n_lines = n_lines
        self.operator = None if config.hops == 0 else np.asarray(operator, dtype=np.float64)
        if self.operator is not None and self.operator.shape != (n_lines, n_lines):
            raise ValueError(f"operator shape {self.operator.shape} for {n_lines} lines")
        rng = np.random.default_rng(seed)
        values = {}
        for direction in ("fwd", "bwd")[: config.directions]:
            for layer in range(config.n_layers):
                d_in = config.input_dim if layer == 0 else config.hidden
                values.update(init_cell(rng, d_in, config.hidden, f"{direction}{layer}."))
        for name, shape in head_shapes(config, n_lines).items():
            fan_in = shape[0] // n_lines if (not config.shared_heads and name.endswith(("W1", "W2"))) else shape[0]
            if ".b" in name:
                values[name] = np.zeros(shape)
            else:
                bound = 1.0 / math.sqrt(fan_in)
                values[name] = rng.uniform(-bound, bound, size=shape)
        self.params = {k: Tensor(v, requires_grad=True, name=k) for k, v in values.items()}

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def names(self) -> list[str]:
        return list(self.params)

    def _cells(self, direction: str):
        return [FusedCell(self.params, f"{direction}{layer}.") for layer in range(self.config.n_layers)]

    def forward(self, x: np.ndarray):
        """``x`` is (B, T, n_lines, input_dim); returns (lower, upper) tensors of
        shape (B * n_lines, horizon), sample-major rows."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[2] != self.n_lines or x.shape[3] != self.config.input_dim:
            raise ad.ShapeError(
                f"expected (B, T, {self.n_lines}, {self.config.input_dim}) input, got {x.shape}"
            )
        if x.shape[1] == 0:
            raise ValueError("empty history")
        batch, steps = x.shape[:2]
        inputs = [Tensor(x[:, t].reshape(batch * self.n_lines, -1)) for t in range(steps)]
        bwd = self._cells("bwd") if self.config.bidirectional else []
        h_fwd, h_bwd = run_bidirectional(self._cells("fwd"), bwd, self.operator, inputs,
                                         self.n_lines, self.config.cell_activation)
        return quantile_forecast(self.params, h_fwd, h_bwd, self.n_lines, self.config.shared_heads)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ValueError(f"expected {self.size} values, got {flat.size}")
        offset = 0
        for p in self.params.values():
            n = p.value.size
            p.value = flat[offset: offset + n].reshape(p.value.shape).copy()
            offset += n

    @property
    def size(self) -> int:
        return sum(p.value.size for p in self.params.values())


def cell_param_count(input_dim: int, hidden: int) -> int:
    return 4 * (input_dim * hidden + hidden * hidden + hidden)


def count_params(config: ModelConfig, n_lines: int = 1) -> dict:
    """Learnable scalar counts: per-direction cell stack, all cells, heads, total."""
    per_direction = 0
    for layer in range(config.n_layers):
        d_in = config.input_dim if layer == 0 else config.hidden
        per_direction += cell_param_count(d_in, config.hidden)
    heads = sum(math.prod(s) for s in head_shapes(config, n_lines).values())
    cells = per_direction * config.directions
    return {
        "cell_per_direction": per_direction,
        "cells": cells,
        "heads": heads,
        "total": cells + heads,
    }
