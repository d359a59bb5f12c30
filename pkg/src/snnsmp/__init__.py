"""Stochastic neural networks trained as stochastic optimal control problems.

The network is the Euler-Maruyama scheme of a controlled SDE; its weights,
biases and diffusion coefficients form a control path optimized by
single-sample SGD with gradients from a path-wise backward adjoint sweep.
"""

from .adjoint import AdjointPath, LossSpec, solve_adjoint
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dynamics import ControlPath, LayerControl, NetConfig, StatePath, simulate_path
from .estimator import SNNClassifier, SNNRegressor
from .evaluation import Band, PredictiveSample, band, classification_metrics, param_estimate, predict
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    DatasetError,
    PropagationError,
    SNNError,
    TrainingDiverged,
)
from .experiments import RunConfig, evaluate, fit, preset, run
from .tasks import Dataset, generate, read_dataset, write_dataset
from .trainer import (
    ControlGradient,
    TrainConfig,
    TrainingLog,
    evaluate_cost,
    init_controls,
    mc_gradient,
    pathwise_gradient,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointPath", "LossSpec", "solve_adjoint",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "ControlPath", "LayerControl", "NetConfig", "StatePath", "simulate_path",
    "SNNClassifier", "SNNRegressor",
    "Band", "PredictiveSample", "band", "classification_metrics", "param_estimate", "predict",
    "CheckpointError", "ConfigurationError", "DatasetError", "PropagationError", "SNNError", "TrainingDiverged",
    "RunConfig", "evaluate", "fit", "preset", "run",
    "Dataset", "generate", "read_dataset", "write_dataset",
    "ControlGradient", "TrainConfig", "TrainingLog", "evaluate_cost", "init_controls", "mc_gradient",
    "pathwise_gradient", "train",
]
