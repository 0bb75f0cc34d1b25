"""Deterministic simulator of pipelined, data-parallel and single-device training."""

from .errors import DivergedError, InputError, InvariantError, ShapeError
from .estimator import PipelinedMLPClassifier
from .executor import (
    STRATEGIES,
    RunResult,
    TaskEvent,
    Transfer,
    emit_trace,
    measure_version_lags,
    run_data_parallel,
    run_schedule,
    train_single,
)
from .nn import LayerSpec, ModelSpec
from .optim import OptimState, PredictionContext, predict_weights, version_difference
from .partition import StagePlan, balance_partition

__all__ = [
    "DivergedError", "InputError", "InvariantError", "ShapeError",
    "PipelinedMLPClassifier", "STRATEGIES", "RunResult", "TaskEvent", "Transfer",
    "emit_trace", "measure_version_lags", "run_data_parallel", "run_schedule", "train_single",
    "LayerSpec", "ModelSpec", "OptimState", "PredictionContext", "predict_weights",
    "version_difference", "StagePlan", "balance_partition",
]
