"""Finite volume schemes for stiff relaxation systems and spacetime conservation laws."""

__version__ = "0.1.0"

from apfv.ap import APConfig, ap_step, discrete_asymptotic_step, run_ap
from apfv.chapman_enskog import (
    closed_form_effective,
    effective_diffusion_matrix,
    first_order_corrector,
)
from apfv.errors import (
    APFVError,
    ConfigurationError,
    DomainError,
    HyperbolicityError,
    InvariantViolation,
    NumericalFailure,
    PreconditionError,
    StructureError,
    UnsupportedError,
)
from apfv.hyperbolic import DiscreteField, UniformGrid1D, run_hll
from apfv.models import MODELS, get_model, verify_structural_conditions
from apfv.parabolic import parabolic_problem, solve_parabolic

__all__ = [
    "MODELS", "APConfig", "APFVError", "ConfigurationError", "DiscreteField", "DomainError",
    "HyperbolicityError", "InvariantViolation", "NumericalFailure", "PreconditionError",
    "StructureError", "UniformGrid1D", "UnsupportedError", "__version__", "ap_step",
    "closed_form_effective", "discrete_asymptotic_step", "effective_diffusion_matrix",
    "first_order_corrector", "get_model", "parabolic_problem", "run_ap", "run_hll",
    "solve_parabolic", "verify_structural_conditions",
]
