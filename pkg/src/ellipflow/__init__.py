"""Exact self-similar solutions of pressureless density-dependent Navier-Stokes flow.

Integrates the Emden systems for the scale factors a_i(t), reconstructs the
density and velocity fields, checks them against the PDE by residual
evaluation, and probes their long-time dynamics.
"""

from .errors import (
    BlowupDuringLyapunov,
    DomainError,
    EllipflowError,
    InfiniteMassError,
    RangeError,
    SchemaError,
    SupportBoundaryError,
    ValidationError,
)
from .model import EmdenSpec, PhaseState, System, jacobian, rhs
from .integrator import IntegrationConfig, Termination, TerminationKind, Trajectory, dense_eval, integrate
from .fields import FieldSample, Profile, field_eval, profile_eval, profile_for, total_mass
from .verify import ResidualReport, adjudicate, verify_run, verify_trajectory
from .dynamics import (
    ClassKind,
    RunReport,
    Section,
    analyze,
    classify,
    first_integral,
    lyapunov_spectrum,
    poincare_section,
    sweep,
    theorem_bound,
)

__version__ = "0.1.0"
