"""Probabilistic dynamic line rating forecasts on line graphs of power grids."""
from .estimator import DLRForecaster, TargetScaler
from .graph import Bus, Grid, Line, LineGraphIndex, to_line_graph
from .metrics import MetricReport, metric_report
from .model import ModelConfig, QuantileNetwork, count_params
from .thermal import ConductorParams, WeatherSample, ampacity

__version__ = "0.1.0"

__all__ = [
    "Bus", "ConductorParams", "DLRForecaster", "Grid", "Line", "LineGraphIndex", "MetricReport",
    "ModelConfig", "QuantileNetwork", "TargetScaler", "WeatherSample", "ampacity", "count_params",
    "metric_report", "to_line_graph",
]
