from .dataset import generate_push_dataset, load_push_dataset, save_push_dataset
from .experiment import MATRICES, BenchConfig, ExperimentMatrix, ExperimentReport, Models, run_experiment
from .metrics import MetricsConfig, TrialMetrics, compute_metrics
from .report import emit_report
from .scenario import ScenarioConfig, Zone, build_trial

__all__ = ["MATRICES", "BenchConfig", "ExperimentMatrix", "ExperimentReport", "MetricsConfig", "Models",
           "ScenarioConfig", "TrialMetrics", "Zone", "build_trial", "compute_metrics", "emit_report",
           "generate_push_dataset", "load_push_dataset", "run_experiment", "save_push_dataset"]
