"""Multi-environment meta-learning for stochastic linear bandits."""

from ._backend import BACKEND
from .estimation import (
    BiasOracleConfig,
    BiasOracleMode,
    ConfidenceEllipsoid,
    ConfigurationError,
    OnlineRLSState,
    biased_radius,
    biased_rls_estimate,
    ellipsoid_ucb,
    oful_radius,
    rls_estimate,
    rls_update,
)
from .policies import (
    BiasSet,
    InsufficientTrainingTasks,
    MemlConfig,
    Policy,
    RegretTrace,
    TaskRunRecord,
    build_bias_set,
    classify_environment,
    meml_run_task,
    oful_select_action,
    run_baseline_task,
)

__version__ = "0.1.0"
