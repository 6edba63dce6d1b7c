# __init__.py

__version__ = "0.1.0"

from .config import IntegratorConfig, RuntimeConfig, ScenarioConfig, engine_config, load_scenario
from .exceptions import (
    ConfigurationError,
    DivergenceError,
    LimeJDSError,
    NoInvariantMeasureError,
    ScenarioParseError,
    ScenarioValidationError,
    ValidationError,
)
from .systems import CoefficientField, CoupledJumpDiffusion, LevyMeasure, ScalarField, make_system
from .integrator import simulate_boundary_x1, simulate_ensemble, simulate_path
from .generator import apply_generator, one_step_expectation, validate_lipschitz
from .stability import (
    StabilityHypotheses,
    check_hypotheses,
    estimate_invariant_measure,
    estimate_lambda,
    estimate_log_lyapunov_exponent,
    scalar_exponent,
    stability_verdict,
)
from .coupling import CouplingConfig, estimate_coupling_decay, simulate_coupled_triple, stopping_time_tau_delta
from .polar import LinearizedCoefficients, simulate_boundary_sphere_system, sphere_occupation, stability_integral
from .fastslow import FastSlowSystem, lambda_eps, lambda_star, lambda_sweep, simulate_fastslow
from .control import FeedbackGainDesign, compute_lambda_A, synthesize_gain, verify_weak_stabilization
from .consensus import (
    ConsensusProtocol,
    LeaderFollowerGraph,
    NoiseModel,
    consentability_verdict,
    laplacian_from_adjacency,
    simulate_error_system,
    simulate_network,
)
from .runner import list_scenarios, run_scenario
