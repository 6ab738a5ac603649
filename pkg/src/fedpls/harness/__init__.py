from .analysis import TrendReport, compare_trends, convergence_episode, final_window_mean, moving_average, read_metrics
from .config import RunConfig, load_config, parse_ini, profile, to_ini
from .experiment import ExperimentResult, MetricsRecord, run_experiment
from .plot import emit_plot

__all__ = [
    "ExperimentResult",
    "MetricsRecord",
    "RunConfig",
    "TrendReport",
    "compare_trends",
    "convergence_episode",
    "emit_plot",
    "final_window_mean",
    "load_config",
    "moving_average",
    "parse_ini",
    "profile",
    "read_metrics",
    "run_experiment",
    "to_ini",
]
