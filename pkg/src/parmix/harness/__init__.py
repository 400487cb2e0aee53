from .config import ConfigError, RunConfig, load_config, parse_config
from .evaluation import EvalMetrics, evaluate, levenshtein, score
from .tasks import TaskSpec, make_task
from .training import MetricsRecord, TrainingDiverged, TrainResult, read_metrics, train

__all__ = [
    "ConfigError",
    "EvalMetrics",
    "MetricsRecord",
    "RunConfig",
    "TaskSpec",
    "TrainResult",
    "TrainingDiverged",
    "evaluate",
    "levenshtein",
    "load_config",
    "make_task",
    "parse_config",
    "read_metrics",
    "score",
    "train",
]
