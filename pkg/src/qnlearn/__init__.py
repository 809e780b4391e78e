"""Learn closed queuing-network models from queue-length traces.

The package fits routing probabilities and service rates by
backpropagating a max-relative error through the Euler-discretized
mean-field dynamics of the network, validates against exact Gillespie
simulation, and evaluates the learned model under unseen populations,
concurrency levels, and routing weights.
"""

from ._kernels import BACKEND
from .analysis import (
    ErrorSummary,
    Scenario,
    find_bottleneck,
    prediction_error,
    shift_bottleneck,
    steady_state,
    summarize_errors,
    whatif,
)
from .fluid import FluidState, fluid_rhs, forward_trajectory
from .model import (
    QnModel,
    RandomQnConfig,
    SelfLoopSpec,
    random_model,
    selfloop_transform,
    validate_model,
)
from .simulate import (
    EnsembleConfig,
    JumpEvent,
    SsaPath,
    ensemble_average,
    sample_path_on_grid,
    simulate_ssa,
    transition_rates,
)
from .trace import Dataset, GridSpec, Trace
from .training import (
    AdamState,
    Gradients,
    RawParams,
    TrainConfig,
    TrainReport,
    adam_step,
    backward,
    loss,
    materialize,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdamState",
    "Dataset",
    "EnsembleConfig",
    "ErrorSummary",
    "FluidState",
    "Gradients",
    "GridSpec",
    "JumpEvent",
    "QnModel",
    "RandomQnConfig",
    "RawParams",
    "Scenario",
    "SelfLoopSpec",
    "SsaPath",
    "Trace",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "backward",
    "ensemble_average",
    "find_bottleneck",
    "fluid_rhs",
    "forward_trajectory",
    "loss",
    "materialize",
    "prediction_error",
    "random_model",
    "sample_path_on_grid",
    "selfloop_transform",
    "shift_bottleneck",
    "simulate_ssa",
    "steady_state",
    "summarize_errors",
    "train",
    "transition_rates",
    "validate_model",
    "whatif",
]
