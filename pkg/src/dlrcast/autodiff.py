"""Dense reverse-mode differentiation over 2-D float64 arrays.

Operations executed inside ``with Tape() as tape:`` are appended to the tape
when any input requires a gradient.  ``tape.backward(loss)`` walks the
record in reverse insertion order, which is a valid reverse topological
order because a node can only be recorded after its parents exist.

Batched graph data uses row blocks: a (B * n, d) tensor holds B samples of
n line-graph nodes each, sample-major.  ``graph_mix`` and
``linewise_affine`` are the only ops aware of that layout.
"""
from __future__ import annotations

import threading

import numpy as np


class NonFiniteError(FloatingPointError):
    """An operation produced inf or nan."""


class ShapeError(ValueError):
    pass


_state = threading.local()


def _active_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name", "op", "parents", "backward_fn", "node_id")

    def __init__(self, value, requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(1, -1)
        if value.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {value.shape}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = None
        self.parents = ()
        self.backward_fn = None
        self.node_id = None

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = self.name or self.op or "leaf"
        return f"Tensor({label}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class ColumnBlock:
    """Gradient that only touches columns [start, stop) of its parent."""

    __slots__ = ("start", "stop", "grad")

    def __init__(self, start, stop, grad):
        self.start, self.stop, self.grad = start, stop, grad


class Tape:
    """Append-only operation record confined to one thread."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._used = False

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def record(self, node: Tensor):
        node.node_id = len(self.nodes)
        self.nodes.append(node)

    def reset(self):
        for node in self.nodes:
            node.grad = None
        self.nodes = []
        self._used = False

    def backward(self, loss: Tensor):
        if self._used:
            raise RuntimeError("backward already ran on this tape; call reset() first")
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.shape}")
        self._used = True
        loss.grad = np.ones((1, 1))
        owned = set()  # ids of tensors whose grad array the tape allocated itself
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            if node is not loss:
                node.grad = None  # intermediate gradients are not kept
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if isinstance(g, ColumnBlock):
                    if parent.grad is None:
                        parent.grad = np.zeros(parent.shape)
                    elif id(parent) not in owned:
                        parent.grad = parent.grad.copy()  # may alias a sibling's gradient
                    owned.add(id(parent))
                    parent.grad[:, g.start:g.stop] += g.grad
                else:
                    parent.grad = g if parent.grad is None else parent.grad + g


def backward(loss: Tensor, params, tape: Tape | None = None) -> list[np.ndarray]:
    """Run the tape and return one gradient per parameter (zeros if unreachable)."""
    tape = tape or _active_tape()
    if tape is None:
        raise RuntimeError("no tape recorded this loss")
    tape.backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


def _make(value, op, parents, backward_fn):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    out = Tensor(value)
    out.op = op
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        tape.record(out)
    return out


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# Backward rules live at module level so gradcheck can exercise (and tests
# can fault-inject) each rule by name.

def _matmul_backward(a, b, g, need=(True, True)):
    return (g @ b.T if need[0] else None), (a.T @ g if need[1] else None)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    need = (a.requires_grad, b.requires_grad)
    return _make(av @ bv, "matmul", (a, b), lambda g: _matmul_backward(av, bv, g, need))


def _add_backward(g):
    return g, g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _make(a.value + b.value, "add", (a, b), _add_backward)


def _add_bias_backward(g):
    return g, g.sum(axis=0, keepdims=True)


def add_bias(x, bias) -> Tensor:
    """x + bias with a (1, cols) bias broadcast over rows."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias: bias {bias.shape} for input {x.shape}")
    return _make(x.value + bias.value, "add_bias", (x, bias), _add_bias_backward)


def _hadamard_backward(a, b, g, need=(True, True)):
    return (g * b if need[0] else None), (g * a if need[1] else None)


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    need = (a.requires_grad, b.requires_grad)
    return _make(av * bv, "hadamard", (a, b), lambda g: _hadamard_backward(av, bv, g, need))


def _sigmoid_backward(s, g):
    return (g * s * (1.0 - s),)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _make(s, "sigmoid", (x,), lambda g: _sigmoid_backward(s, g))


def _tanh_backward(t, g):
    return (g * (1.0 - t * t),)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.value)
    return _make(t, "tanh", (x,), lambda g: _tanh_backward(t, g))


def _concat_cols_backward(widths, g):
    edges = np.cumsum([0] + widths)
    return tuple(g[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:]))


def concat_cols(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {sorted(rows)}")
    widths = [t.shape[1] for t in tensors]
    value = np.concatenate([t.value for t in tensors], axis=1)
    return _make(value, "concat_cols", tensors, lambda g: _concat_cols_backward(widths, g))


def _slice_cols_backward(shape, start, stop, g):
    return (ColumnBlock(start, stop, g),)


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape
    return _make(x.value[:, start:stop], "slice_cols", (x,),
                 lambda g: _slice_cols_backward(shape, start, stop, g))


def _sum_backward(shape, g):
    return (np.full(shape, g[0, 0]),)


def sum(x) -> Tensor:  # noqa: A001 - mirrors the numpy name on purpose
    x = as_tensor(x)
    shape = x.shape
    return _make(np.array([[x.value.sum()]]), "sum", (x,), lambda g: _sum_backward(shape, g))


def _mean_backward(shape, g):
    return (np.full(shape, g[0, 0] / (shape[0] * shape[1])),)


def mean(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _make(np.array([[x.value.mean()]]), "mean", (x,), lambda g: _mean_backward(shape, g))


def _pinball_backward(under, q, g):
    # under: target >= pred, the q-branch (this includes the tie pred == target)
    dpred = np.where(under, -q, 1.0 - q) * g
    return dpred, -dpred


def pinball(pred, target, q: float) -> Tensor:
    """Elementwise quantile loss of ``pred`` against ``target`` at level q."""
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape("pinball", pred, target)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    diff = target.value - pred.value
    under = diff >= 0
    value = np.where(under, q * diff, (q - 1.0) * diff)
    return _make(value, "pinball", (pred, target), lambda g: _pinball_backward(under, q, g))


def _graph_mix_backward(a, n, g):
    blocks = g.reshape(-1, n, g.shape[1])
    return (np.matmul(a.T, blocks).reshape(g.shape),)


def graph_mix(a: np.ndarray, x, n: int) -> Tensor:
    """Apply the constant (n, n) operator ``a`` to every n-row block of x."""
    x = as_tensor(x)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (n, n) or x.shape[0] % n:
        raise ShapeError(f"graph_mix: operator {a.shape} for input {x.shape}, block {n}")
    blocks = x.value.reshape(-1, n, x.shape[1])
    value = np.matmul(a, blocks).reshape(x.shape)
    return _make(value, "graph_mix", (x,), lambda g: _graph_mix_backward(a, n, g))


def _linewise_affine_backward(x3, w3, n, g):
    g3 = g.reshape(-1, n, g.shape[1]).transpose(1, 0, 2)  # (n, B, k)
    dx = np.matmul(g3, w3.transpose(0, 2, 1)).transpose(1, 0, 2).reshape(-1, w3.shape[1])
    dw = np.matmul(x3.transpose(0, 2, 1), g3).reshape(-1, w3.shape[2])
    db = g3.sum(axis=1)
    return dx, dw, db


def linewise_affine(x, w, b, n: int) -> Tensor:
    """Per-node affine map: row block position i uses its own weights.

    ``w`` is (n * d, k) holding n stacked (d, k) matrices and ``b`` is (n, k).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    d = x.shape[1]
    if x.shape[0] % n or w.shape[0] != n * d or b.shape != (n, w.shape[1]):
        raise ShapeError(f"linewise_affine: x {x.shape}, w {w.shape}, b {b.shape}, n {n}")
    k = w.shape[1]
    x3 = x.value.reshape(-1, n, d).transpose(1, 0, 2)  # (n, B, d)
    w3 = w.value.reshape(n, d, k)
    out = np.matmul(x3, w3) + b.value[:, None, :]  # (n, B, k)
    value = out.transpose(1, 0, 2).reshape(-1, k)
    return _make(value, "linewise_affine", (x, w, b),
                 lambda g: _linewise_affine_backward(x3, w3, n, g))
