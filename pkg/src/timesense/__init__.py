"""timesense: elapsed-time estimation from sensor streams, and a
TD-learning agent that acts on the estimate in a temporal-discrimination
task.
"""

__version__ = "0.1.0"

from .ou import (
    ConditioningError,
    KernelMatrix,
    OUHyperparams,
    SampleTimes,
    SensorBatch,
    build_kernel,
    log_likelihood,
    loglik_gradient,
    sample_paths,
)
from .estimator import (
    FitConfig,
    FitResult,
    NumericalError,
    TauGrid,
    TimeEstimate,
    default_tau_grid,
    estimate_tau,
    fit,
    fit_hyperparams,
    subsample_channels,
)
from .features import (
    MicrostimuliConfig,
    TraceState,
    basis,
    csc_features,
    deploy_event,
    microstimuli_features,
    override_age,
    tick,
    trace_height,
)
from .agent import (
    AgentParams,
    decay_epsilon,
    init_weights,
    q_value,
    select_action,
    td_error,
    tabular_update,
    update,
)
from .env import Action, EnvState, Phase, StepOutcome, TaskConfig, TimingTask, score_points
from .experiment import (
    EpisodeLog,
    MOUSE_PSYCHOMETRIC,
    PsychometricCurve,
    RunConfig,
    RunSummary,
    mix64,
    psychometric,
    run_episode,
    run_experiment,
    tau_accuracy_sweep,
    td_error_trajectory,
)

__all__ = [
    "__version__",
    # ou
    "ConditioningError",
    "KernelMatrix",
    "OUHyperparams",
    "SampleTimes",
    "SensorBatch",
    "build_kernel",
    "log_likelihood",
    "loglik_gradient",
    "sample_paths",
    # estimator
    "FitConfig",
    "FitResult",
    "NumericalError",
    "TauGrid",
    "TimeEstimate",
    "default_tau_grid",
    "estimate_tau",
    "fit",
    "fit_hyperparams",
    "subsample_channels",
    # features
    "MicrostimuliConfig",
    "TraceState",
    "basis",
    "csc_features",
    "deploy_event",
    "microstimuli_features",
    "override_age",
    "tick",
    "trace_height",
    # agent
    "AgentParams",
    "decay_epsilon",
    "init_weights",
    "q_value",
    "select_action",
    "td_error",
    "tabular_update",
    "update",
    # env
    "Action",
    "EnvState",
    "Phase",
    "StepOutcome",
    "TaskConfig",
    "TimingTask",
    "score_points",
    # experiment
    "EpisodeLog",
    "MOUSE_PSYCHOMETRIC",
    "PsychometricCurve",
    "RunConfig",
    "RunSummary",
    "mix64",
    "psychometric",
    "run_episode",
    "run_experiment",
    "tau_accuracy_sweep",
    "td_error_trajectory",
]
