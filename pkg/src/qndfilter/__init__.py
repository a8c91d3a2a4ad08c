"""Simulation of dispersively measured N-level spin systems with
projection-filter feedback stabilization."""

__version__ = "0.1.0"

from .analysis import (
    EnsembleSummary,
    lyapunov_reduction,
    lyapunov_target,
    reduction_histogram,
    run_ensemble,
    sample_exponent,
)
from .config import ExperimentConfig, config_from_dict, load_config
from .errors import (
    BlowUpError,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    QndFilterError,
    SingularFamilyError,
    StateCorruptionError,
)
from .family import (
    FamilyContext,
    fisher_and_drift,
    make_family,
    project_tangent,
    rho_from_theta,
    rho_from_xi,
    theta_to_xi,
    xi_to_theta,
)
from .feedback import (
    AssumptionReport,
    ControllerSpec,
    bump_factor,
    control_rho_theta,
    control_xi,
    validate_assumptions,
)
from .filters import (
    NoiseMode,
    diag_increment_oracle,
    step_estimate,
    step_projection_rho,
    step_theta,
    step_true,
    step_xi,
    step_zakai,
)
from .quantum import (
    DensityMatrix,
    SystemModel,
    build_system,
    bures_distance,
    fidelity,
    scalar_diagnostics,
    superop_F,
    superop_Fhat,
    superop_G,
)
from .sde import IntegratorConfig, NoiseStream, euler_step, renormalize, stratonovich_to_ito
