"""Reliability and sharpness scores for prediction intervals.

All inputs are arrays shaped (windows, lines, horizon) in physical units.
Width-type scores are divided by each line's target range on the
evaluated set, averaged over lines, and reported in percent.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

REPORT_NOTE = (
    "PICP/ACE in percent of (window, line, hour) points; PINAW, IS and QS are "
    "normalized per line by the line's target range (max - min) on the evaluated "
    "set, averaged over lines, in percent. IS is the Winkler score at "
    "alpha = 1 - (Q_U - Q_L); QS averages the pinball loss over both bounds."
)


@dataclass
class MetricReport:
    ACE: float
    PINAW: float
    IS: float
    QS: float
    PICP: float
    crossing_rate: float
    PINC: float
    per_line_QS: list = field(default_factory=list)
    line_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["note"] = REPORT_NOTE
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for key in ("ACE", "PINAW", "IS", "QS", "PICP", "crossing_rate", "PINC"):
                w.writerow([key, repr(getattr(self, key))])
            for line_id, qs in zip(self.line_ids, self.per_line_QS):
                w.writerow([f"QS[{line_id}]", repr(qs)])


def _as3d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, None, :]
    elif a.ndim == 2:
        a = a[None]
    return a


def line_ranges(y) -> np.ndarray:
    """Per-line target range; a flat line falls back to 1 to keep scores finite."""
    y = _as3d(y)
    rng = y.max(axis=(0, 2)) - y.min(axis=(0, 2))
    return np.where(rng > 0, rng, 1.0)


def picp(y, lower, upper) -> float:
    y, lower, upper = _as3d(y), _as3d(lower), _as3d(upper)
    return float(np.mean((y >= lower) & (y <= upper)) * 100.0)


def ace(y, lower, upper, pinc: float) -> float:
    return abs(picp(y, lower, upper) - pinc)


def pinaw(y, lower, upper) -> float:
    y, lower, upper = _as3d(y), _as3d(lower), _as3d(upper)
    width = (upper - lower).mean(axis=(0, 2))
    return float(np.mean(width / line_ranges(y)) * 100.0)


def winkler(y, lower, upper, alpha: float) -> np.ndarray:
    """Pointwise interval score: width plus 2/alpha times the miss distance."""
    y, lower, upper = (np.asarray(a, dtype=np.float64) for a in (y, lower, upper))
    below = np.maximum(lower - y, 0.0)
    above = np.maximum(y - upper, 0.0)
    return (upper - lower) + (2.0 / alpha) * (below + above)


def interval_score(y, lower, upper, alpha: float) -> float:
    y, lower, upper = _as3d(y), _as3d(lower), _as3d(upper)
    per_line = winkler(y, lower, upper, alpha).mean(axis=(0, 2))
    return float(np.mean(per_line / line_ranges(y)) * 100.0)


def pinball_values(y, pred, q: float) -> np.ndarray:
    diff = np.asarray(y, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    return np.where(diff >= 0, q * diff, (q - 1.0) * diff)


def per_line_quantile_score(y, lower, upper, quantiles) -> np.ndarray:
    y, lower, upper = _as3d(y), _as3d(lower), _as3d(upper)
    q_lo, q_hi = quantiles
    both = 0.5 * (pinball_values(y, lower, q_lo) + pinball_values(y, upper, q_hi))
    return both.mean(axis=(0, 2)) / line_ranges(y) * 100.0


def quantile_score(y, lower, upper, quantiles) -> float:
    return float(np.mean(per_line_quantile_score(y, lower, upper, quantiles)))


def metric_report(y, lower, upper, quantiles=(0.1, 0.9), crossing_rate=0.0,
                  line_ids=None) -> MetricReport:
    """Score ordered bounds against truth; ``crossing_rate`` is a fraction."""
    y, lower, upper = _as3d(y), _as3d(lower), _as3d(upper)
    if y.size == 0:
        raise ValueError("empty evaluation set")
    if not (y.shape == lower.shape == upper.shape):
        raise ValueError(f"shape mismatch: y {y.shape}, lower {lower.shape}, upper {upper.shape}")
    q_lo, q_hi = quantiles
    pinc = (q_hi - q_lo) * 100.0
    alpha = 1.0 - (q_hi - q_lo)
    coverage = picp(y, lower, upper)
    per_line = per_line_quantile_score(y, lower, upper, quantiles)
    return MetricReport(
        ACE=abs(coverage - pinc),
        PINAW=pinaw(y, lower, upper),
        IS=interval_score(y, lower, upper, alpha),
        QS=float(np.mean(per_line)),
        PICP=coverage,
        crossing_rate=float(crossing_rate) * 100.0,
        PINC=pinc,
        per_line_QS=[float(v) for v in per_line],
        line_ids=list(line_ids) if line_ids is not None else list(range(y.shape[1])),
    )
