"""Quantile-loss objective, AdamW, and the mini-batch training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    batch_size: int = 128
    clip_norm: float = 5.0
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.learning_rate > 0 or self.weight_decay < 0 or not self.clip_norm > 0:
            raise ValueError("learning_rate and clip_norm must be positive, weight_decay >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def total_loss(lower, upper, target, quantiles, n_samples: int = 1):
    """Pinball loss summed over both bounds, lines and horizon steps.

    Divided by ``n_samples`` so a mini-batch reports the mean per-window sum.
    """
    q_lo, q_hi = quantiles
    target = ad.as_tensor(target)
    loss = ad.add(ad.sum(ad.pinball(lower, target, q_lo)), ad.sum(ad.pinball(upper, target, q_hi)))
    if n_samples != 1:
        loss = ad.hadamard(loss, ad.Tensor([[1.0 / n_samples]]))
    return loss


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params, lr=1e-3, weight_decay=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value = p.value - self.lr * update


def clip_global_norm(grads, max_norm: float):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


def batch_loss(network, x, y):
    """Forward + loss for a batch; ``y`` is (B, n_lines, horizon)."""
    lower, upper = network.forward(x)
    target = np.asarray(y, dtype=np.float64).reshape(lower.shape)
    return total_loss(lower, upper, target, network.config.quantiles, n_samples=len(x))


def evaluate_loss(network, x, y, batch_size: int) -> float:
    total = 0.0
    for lo in range(0, len(x), batch_size):
        xb, yb = x[lo: lo + batch_size], y[lo: lo + batch_size]
        total += float(batch_loss(network, xb, yb).value[0, 0]) * len(xb)
    return total / len(x)


def split_validation(n: int, val_fraction: float) -> int:
    """Number of leading windows kept for fitting; the rest validate."""
    if val_fraction <= 0 or n < 2:
        return n
    n_val = max(1, int(round(n * val_fraction)))
    return n - n_val


def train(network, x, y, cfg: TrainConfig, callback=None) -> dict:
    """Fit ``network`` in place and return the loss history.

    The last ``val_fraction`` of windows (chronological order is assumed)
    select the best epoch; its parameters are restored at the end.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} targets")
    n_fit = split_validation(len(x), cfg.val_fraction)
    x_fit, y_fit = x[:n_fit], y[:n_fit]
    x_val, y_val = x[n_fit:], y[n_fit:]

    params = network.parameters()
    opt = AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = {"epoch": [], "train_loss": [], "val_loss": [], "grad_norm": []}
    best = (math.inf, network.get_flat(), 0)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_fit)
        epoch_loss = 0.0
        norms = []
        for lo in range(0, n_fit, cfg.batch_size):
            idx = np.sort(order[lo: lo + cfg.batch_size])
            for p in params:
                p.zero_grad()
            with ad.Tape() as tape:
                loss = batch_loss(network, x_fit[idx], y_fit[idx])
                value = float(loss.value[0, 0])
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {lo}")
                grads = ad.backward(loss, params, tape)
            for g, p in zip(grads, params):
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient for {p.name} at epoch {epoch}")
            grads, norm = clip_global_norm(grads, cfg.clip_norm)
            norms.append(norm)
            opt.step(grads)
            epoch_loss += value * len(idx)
        epoch_loss /= n_fit
        val_loss = evaluate_loss(network, x_val, y_val, cfg.batch_size) if len(x_val) else epoch_loss
        history["epoch"].append(epoch)
        history["train_loss"].append(epoch_loss)
        history["val_loss"].append(val_loss)
        history["grad_norm"].append(float(np.mean(norms)))
        log.info("epoch %d train %.6f val %.6f", epoch, epoch_loss, val_loss)
        if val_loss < best[0]:
            best = (val_loss, network.get_flat(), epoch)
        if callback is not None:
            callback(epoch, epoch_loss, val_loss)

    network.set_flat(best[1])
    history["best_epoch"] = best[2]
    return history
