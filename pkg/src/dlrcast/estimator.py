"""scikit-learn style front end for the quantile forecasters."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import assert_all_finite
from sklearn.utils.validation import check_is_fitted

from .graph import LineGraphIndex
from .metrics import MetricReport, metric_report
from .model import ModelConfig, QuantileNetwork, count_params, order_bounds
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def _check_windows(x, n_lines=None, input_dim=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected windows shaped (n, history, lines, features), got {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError("no windows or empty history")
    if n_lines is not None and x.shape[2] != n_lines:
        raise ValueError(f"windows cover {x.shape[2]} lines, model has {n_lines}")
    if input_dim is not None and x.shape[3] != input_dim:
        raise ValueError(f"windows have {x.shape[3]} features, model expects {input_dim}")
    assert_all_finite(x)
    return x


def _check_targets(y, n_windows, n_lines):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3 or y.shape[:2] != (n_windows, n_lines):
        raise ValueError(f"targets must be (n, lines, horizon) = ({n_windows}, {n_lines}, tau), got {y.shape}")
    assert_all_finite(y)
    return y


class TargetScaler:
    """Per-line min/max scaling to [0, 1] on the fitted targets."""

    def __init__(self, low, high):
        self.low = np.asarray(low, dtype=np.float64)
        span = np.asarray(high, dtype=np.float64) - self.low
        self.span = np.where(span > 0, span, 1.0)

    @classmethod
    def fit(cls, y):
        return cls(y.min(axis=(0, 2)), y.max(axis=(0, 2)))

    def transform(self, y):
        return (y - self.low[:, None]) / self.span[:, None]

    def inverse_transform(self, z):
        return z * self.span[:, None] + self.low[:, None]


class DLRForecaster(BaseEstimator):
    """Probabilistic next-day line rating forecaster.

    Parameters
    ----------
    line_graph : LineGraphIndex or None
        Supplies the mixing operator; ``variant='lstm'`` does not need it.
    variant : {'d-lgclstm', 'lgclstm', 'lstm'}
    hidden, head_hidden : int
        Recurrent state width and quantile-head hidden width.
    quantiles : tuple of float
        Lower and upper quantile levels.
    cell_activation : {'sigmoid', 'tanh'}
        Squashing applied to the cell state before the output gate.
    shared_heads : bool
        One head pair for all lines instead of one per line.
    epochs, learning_rate, weight_decay, batch_size, clip_norm, val_fraction :
        Training settings, see :class:`dlrcast.training.TrainConfig`.
    random_state : int
        Seeds initialization and the shuffle order.

    ``fit`` takes windows ``X`` of shape (n, history, lines, features) and
    targets ``y`` of shape (n, lines, horizon) in physical units.
    """

    def __init__(self, line_graph=None, variant="d-lgclstm", hidden=64, head_hidden=64,
                 quantiles=(0.1, 0.9), cell_activation="sigmoid", shared_heads=False,
                 epochs=50, learning_rate=1e-3, weight_decay=1e-3, batch_size=128,
                 clip_norm=5.0, val_fraction=0.1, random_state=0):
        self.line_graph = line_graph
        self.variant = variant
        self.hidden = hidden
        self.head_hidden = head_hidden
        self.quantiles = quantiles
        self.cell_activation = cell_activation
        self.shared_heads = shared_heads
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _model_config(self, input_dim, horizon):
        return ModelConfig(variant=self.variant, input_dim=input_dim, hidden=self.hidden,
                           head_hidden=self.head_hidden, horizon=horizon,
                           quantiles=tuple(self.quantiles), cell_activation=self.cell_activation,
                           shared_heads=self.shared_heads)

    def _train_config(self):
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay, batch_size=self.batch_size,
                           clip_norm=self.clip_norm, val_fraction=self.val_fraction,
                           seed=self.random_state)

    def _operator(self, config, n_lines):
        if config.hops == 0:
            return None
        if self.line_graph is None:
            raise ValueError(f"variant {self.variant!r} needs line_graph")
        if isinstance(self.line_graph, LineGraphIndex):
            return self.line_graph.operator(config.hops)
        return np.asarray(self.line_graph, dtype=np.float64)

    def fit(self, X, y, callback=None):
        X = _check_windows(X)
        y = _check_targets(y, X.shape[0], X.shape[2])
        config = self._model_config(X.shape[3], y.shape[2])
        self.n_lines_ = X.shape[2]
        self.config_ = config
        self.network_ = QuantileNetwork(config, self.n_lines_, self._operator(config, self.n_lines_),
                                        seed=self.random_state)
        self.scaler_ = TargetScaler.fit(y)
        self.history_ = train(self.network_, X, self.scaler_.transform(y), self._train_config(),
                              callback=callback)
        return self

    def predict_raw(self, X, batch_size=None):
        """Unordered (lower, upper) in physical units, each (n, lines, horizon)."""
        check_is_fitted(self, "network_")
        X = _check_windows(X, self.n_lines_, self.config_.input_dim)
        batch_size = batch_size or max(1, self.batch_size)
        lows, highs = [], []
        for lo in range(0, len(X), batch_size):
            xb = X[lo: lo + batch_size]
            lower, upper = self.network_.forward(xb)
            shape = (len(xb), self.n_lines_, self.config_.horizon)
            lows.append(lower.value.reshape(shape))
            highs.append(upper.value.reshape(shape))
        lower = self.scaler_.inverse_transform(np.concatenate(lows))
        upper = self.scaler_.inverse_transform(np.concatenate(highs))
        return lower, upper

    def predict_interval(self, X, return_crossing=False):
        """Ordered bounds; crossed pairs are swapped per (line, hour)."""
        lower, upper, rate = order_bounds(*self.predict_raw(X))
        if rate:
            log.info("quantile crossing rate %.4f%%", rate * 100)
        if return_crossing:
            return lower, upper, rate
        return lower, upper

    def predict(self, X):
        """Stacked ordered bounds, shape (n, lines, horizon, 2): [..., 0] lower, [..., 1] upper."""
        lower, upper = self.predict_interval(X)
        return np.stack([lower, upper], axis=-1)

    def evaluate(self, X, y, line_ids=None) -> MetricReport:
        lower, upper, rate = self.predict_interval(X, return_crossing=True)
        y = _check_targets(y, lower.shape[0], lower.shape[1])
        return metric_report(y, lower, upper, self.config_.quantiles, rate, line_ids)

    def score(self, X, y):
        """Negative QS, so larger is better."""
        return -self.evaluate(X, y).QS

    def param_counts(self) -> dict:
        check_is_fitted(self, "network_")
        return count_params(self.config_, self.n_lines_)

    # -- checkpoints ------------------------------------------------------

    def save(self, path, extra=None) -> tuple[Path, Path]:
        """Write ``<path>.bin`` (little-endian float64 parameters) and ``<path>.json``."""
        check_is_fitted(self, "network_")
        path = Path(path)
        bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
        self.network_.get_flat().astype("<f8").tofile(bin_path)
        params = []
        offset = 0
        for name, p in self.network_.params.items():
            params.append({"name": name, "shape": list(p.value.shape), "offset": offset})
            offset += p.value.size
        doc = {
            "format": "dlrcast-checkpoint-1",
            "blob": bin_path.name,
            "n_values": offset,
            "n_lines": self.n_lines_,
            "estimator": {k: v for k, v in self.get_params().items() if k != "line_graph"},
            "model": self.config_.to_dict(),
            "params": params,
            "target_low": [float(v) for v in self.scaler_.low],
            "target_span": [float(v) for v in self.scaler_.span],
            "history": self.history_,
        }
        doc["estimator"]["quantiles"] = list(self.quantiles)
        if extra:
            doc.update(extra)
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return bin_path, json_path

    @classmethod
    def load(cls, path, line_graph=None) -> "DLRForecaster":
        path = Path(path)
        json_path = path.with_suffix(".json")
        with open(json_path) as fh:
            doc = json.load(fh)
        params = dict(doc["estimator"])
        params["quantiles"] = tuple(params["quantiles"])
        est = cls(line_graph=line_graph, **params)
        model = dict(doc["model"])
        model["quantiles"] = tuple(model["quantiles"])
        est.config_ = ModelConfig(**model)
        est.n_lines_ = doc["n_lines"]
        est.network_ = QuantileNetwork(est.config_, est.n_lines_,
                                       est._operator(est.config_, est.n_lines_))
        flat = np.fromfile(json_path.parent / doc["blob"], dtype="<f8")
        if flat.size != doc["n_values"]:
            raise ValueError(f"checkpoint blob holds {flat.size} values, manifest says {doc['n_values']}")
        est.network_.set_flat(flat)
        est.scaler_ = TargetScaler(np.array(doc["target_low"]),
                                   np.array(doc["target_low"]) + np.array(doc["target_span"]))
        est.history_ = doc.get("history", {})
        est.manifest_ = doc
        return est
