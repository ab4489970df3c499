"""Mean-field particle toolkit for the long-ranged Cucker-Smale alignment model.

Simulates the N-particle velocity-alignment system with communication weight
(1 + r^2)^(-beta/2), computes the flocking diagnostics (velocity variance about
the conserved mean velocity, spatial cohesion about the free-streaming center
of mass, polynomial and exponential moments, effective-region tail masses),
and checks the decay envelopes expected for the heavy-tailed, exponential-tail
and compact-velocity initial classes.
"""

from .model import ModelParams, Ensemble, PhasePoint, comm_weight, cs_acceleration, mean_field_force
from .sampler import (
    InitSpec,
    MomentBudget,
    sample_polynomial,
    sample_exponential,
    sample_compact_velocity,
    sample_ensemble,
    verify_moment_budget,
)
from .integrate import TimeGrid, Trajectory, IntegrationError, step_rk4, integrate, paired_integrate
from .functionals import (
    DiagnosticsConfig,
    DiagnosticRecord,
    velocity_variance,
    spatial_cohesion,
    p_moment,
    exp_weighted_mass,
    tail_mass,
    dissipation_rate,
    phi_floor,
    effective_radius,
    delta_functional,
)
from .regimes import RegimeSpec
from .transport import wasserstein_exact, wasserstein_1d, sliced_wasserstein, stability_ratio
from .analysis import (
    RateFit,
    EnvelopeVerdict,
    theoretical_exponent,
    fit_power_exponent,
    fit_exponential_rate,
    envelope_check,
    boundedness_check,
    tail_bound_check,
    gronwall_report,
)

__all__ = [
    "ModelParams",
    "Ensemble",
    "PhasePoint",
    "comm_weight",
    "cs_acceleration",
    "mean_field_force",
    "InitSpec",
    "MomentBudget",
    "sample_polynomial",
    "sample_exponential",
    "sample_compact_velocity",
    "sample_ensemble",
    "verify_moment_budget",
    "TimeGrid",
    "Trajectory",
    "IntegrationError",
    "step_rk4",
    "integrate",
    "paired_integrate",
    "DiagnosticsConfig",
    "DiagnosticRecord",
    "velocity_variance",
    "spatial_cohesion",
    "p_moment",
    "exp_weighted_mass",
    "tail_mass",
    "dissipation_rate",
    "phi_floor",
    "effective_radius",
    "delta_functional",
    "RegimeSpec",
    "wasserstein_exact",
    "wasserstein_1d",
    "sliced_wasserstein",
    "stability_ratio",
    "RateFit",
    "EnvelopeVerdict",
    "theoretical_exponent",
    "fit_power_exponent",
    "fit_exponential_rate",
    "envelope_check",
    "boundedness_check",
    "tail_bound_check",
    "gronwall_report",
]

__version__ = "0.1.0"
