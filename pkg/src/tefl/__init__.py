"""Multi-horizon forecasting with temporal error feedback."""
from .config import TrainConfig, load_config, parse_config
from .datasets import SsmSpec, TimeSeriesTable, load_csv, make_ssm_panel, simulate_ssm
from .evaluation import causality_audit, compute_metrics, rolling_evaluate
from .feedback import PredictionLog, Selection, make_adapter, select_residuals
from .forecasters import make_forecaster
from .system import TeflSystem
from .training import run_training

__all__ = [
    "TrainConfig", "load_config", "parse_config", "SsmSpec", "TimeSeriesTable", "load_csv",
    "make_ssm_panel", "simulate_ssm", "causality_audit", "compute_metrics", "rolling_evaluate",
    "PredictionLog", "Selection", "make_adapter", "select_residuals", "make_forecaster",
    "TeflSystem", "run_training",
]
