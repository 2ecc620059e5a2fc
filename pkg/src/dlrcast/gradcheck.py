"""Central-difference verification of every backward rule and the full model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .model import ModelConfig, QuantileNetwork
from .training import total_loss

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    rel_error: float

    @property
    def passed(self) -> bool:
        return self.rel_error < TOLERANCE


def numeric_gradient(f, params, h=STEP):
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = f()
            flat[k] = orig - h
            down = f()
            flat[k] = orig
            g.reshape(-1)[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric) -> float:
    num = sum(float(np.sum((a - n) ** 2)) for a, n in zip(analytic, numeric)) ** 0.5
    den = (sum(float(np.sum(a * a)) for a in analytic) ** 0.5
           + sum(float(np.sum(n * n)) for n in numeric) ** 0.5)
    return num / max(den, 1e-12)


def check(name, build, params) -> CheckResult:
    """Compare tape gradients of scalar ``build()`` with central differences."""
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build()
        analytic = ad.backward(loss, params, tape)
    analytic = [a.copy() for a in analytic]
    numeric = numeric_gradient(lambda: float(build().value[0, 0]), params)
    return CheckResult(name, relative_error(analytic, numeric))


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


def op_checks(rng):
    """One small graph per op; each ends in a weighted sum so gradients are non-trivial."""
    a, b = _param(rng, 4, 3), _param(rng, 3, 5)
    c, d = _param(rng, 4, 3), _param(rng, 4, 3)
    bias = _param(rng, 1, 3)
    w = rng.normal(size=(4, 3))
    weigh = lambda t: ad.sum(ad.hadamard(t, Tensor(rng_weights(t.shape))))  # noqa: E731

    cache = {}

    def rng_weights(shape):
        if shape not in cache:
            cache[shape] = np.random.default_rng(abs(hash(shape)) % 2**32).normal(size=shape)
        return cache[shape]

    pred = _param(rng, 4, 3)
    offsets = np.sign(rng.normal(size=(4, 3))) * rng.uniform(0.1, 1.0, size=(4, 3))
    target = pred.value + offsets

    n = 3
    op = rng.uniform(size=(n, n))
    xb = _param(rng, 2 * n, 4)
    wl, bl = _param(rng, n * 4, 2), _param(rng, n, 2)

    cases = [
        ("matmul", lambda: weigh(ad.matmul(a, b)), [a, b]),
        ("add", lambda: weigh(ad.add(c, d)), [c, d]),
        ("add_bias", lambda: weigh(ad.add_bias(c, bias)), [c, bias]),
        ("hadamard", lambda: weigh(ad.hadamard(c, d)), [c, d]),
        ("sigmoid", lambda: weigh(ad.sigmoid(c)), [c]),
        ("tanh", lambda: weigh(ad.tanh(c)), [c]),
        ("concat_cols", lambda: weigh(ad.concat_cols([c, d, c])), [c, d]),
        ("slice_cols", lambda: weigh(ad.slice_cols(ad.concat_cols([c, d]), 2, 5)), [c, d]),
        ("sum", lambda: ad.sum(ad.hadamard(c, Tensor(w))), [c]),
        ("mean", lambda: ad.mean(ad.hadamard(d, d)), [d]),
        ("pinball", lambda: ad.sum(ad.pinball(pred, target, 0.1)), [pred]),
        ("graph_mix", lambda: weigh(ad.graph_mix(op, xb, n)), [xb]),
        ("linewise_affine", lambda: weigh(ad.linewise_affine(xb, wl, bl, n)), [xb, wl, bl]),
    ]
    return [check(name, build, params) for name, build, params in cases]


def model_checks(rng, n_lines=4, steps=3, hidden=3, horizon=4):
    """End-to-end loss gradients for each variant on a tiny random line graph."""
    adj = np.zeros((n_lines, n_lines))
    for i in range(n_lines - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    a_hat = adj + np.eye(n_lines)
    norm = 1.0 / np.sqrt(a_hat.sum(axis=1))
    operator = norm[:, None] * a_hat * norm[None, :]

    x = rng.normal(size=(2, steps, n_lines, 5))
    results = []
    variants = [
        ("model[d-lgclstm]", dict(variant="d-lgclstm")),
        ("model[lgclstm]", dict(variant="lgclstm")),
        ("model[lstm]", dict(variant="lstm")),
        ("model[d-lgclstm,tanh-cell,shared-heads]",
         dict(variant="d-lgclstm", cell_activation="tanh", shared_heads=True)),
    ]
    for name, kw in variants:
        config = ModelConfig(input_dim=5, hidden=hidden, head_hidden=3, horizon=horizon, **kw)
        net = QuantileNetwork(config, n_lines, operator, seed=int(rng.integers(1 << 31)))
        lower, upper = (t.value for t in net.forward(x))
        hi, lo = np.maximum(lower, upper), np.minimum(lower, upper)
        above = rng.uniform(size=lower.shape) < 0.5
        target = np.where(above, hi + rng.uniform(0.1, 1.0, lower.shape),
                          lo - rng.uniform(0.1, 1.0, lower.shape))

        def build(net=net):
            lw, up = net.forward(x)
            return total_loss(lw, up, target, net.config.quantiles)

        results.append(check(name, build, net.parameters()))
    return results


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return op_checks(rng) + model_checks(rng)


def format_report(results) -> str:
    lines = [f"{'check':<42} {'rel_error':>10}  status"]
    for r in results:
        lines.append(f"{r.name:<42} {r.rel_error:>10.3e}  {'ok' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks below {TOLERANCE:g}")
    if failed:
        lines.append("failing: " + ", ".join(failed))
    return "\n".join(lines)
