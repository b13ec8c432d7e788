"""Numerical laboratory for hyperboloidal-foliation estimates of a 2+1 wave / Klein-Gordon system.

The coupled system is

    box u = v (A^a d_a v + R v) + Q^{ab} d_a v d_b v,
    box v + v = P^{ab} d_a u d_b u,

with P a null form. Modules:

``frame``          semi-hyperboloidal frame, quadratic forms, vector fields
``foliation``      hyperboloid slices, energies, Klainerman-Sobolev ratio
``evolution``      leapfrog evolver, manufactured solutions, checkpoints
``characteristic`` integral curves of the transport field and the KG ray ODE
``kirchhoff``      disc-intersection quadrature and the retarded integral
``diagnostics``    decay fits, bootstrap bounds, Katayama fields, source norms
``cli``            command line front end
"""
from .errors import (ConfigError, CoverageError, DomainError, HyperlabError, InstabilityError,
                     MissingDerivativeError, NullConditionError, StencilError)
from .frame import MINKOWSKI, QuadraticForm, SpacetimePoint, is_null_form, null00_bound_ratio, to_frame
from .slab import GridSpec, Slab
from .foliation import HyperboloidSlice, SliceObserver, energy, sample_hyperboloid
from .evolution import (CauchyData, SlabState, SystemCoefficients, Trajectory, bump_data, evolve,
                        manufactured_forcing, step)
from .characteristic import integrate_curve, kg_ray_transport, sharp_gradient_bound, solve_transport
from .kirchhoff import I_lambda, classify_case, integral_J, kirchhoff_solve, lambda_minus
from .diagnostics import (BootstrapParams, DecaySeries, bootstrap_check, fit_decay_exponent,
                          katayama_substitution, run_with_diagnostics, source_l2_report)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BootstrapParams", "CauchyData", "ConfigError", "CoverageError", "DecaySeries", "DomainError",
    "GridSpec", "HyperboloidSlice", "HyperlabError", "I_lambda", "InstabilityError", "MINKOWSKI",
    "MissingDerivativeError", "NullConditionError", "QuadraticForm", "Slab", "SlabState", "SliceObserver",
    "SpacetimePoint", "StencilError", "SystemCoefficients", "Trajectory", "bootstrap_check", "bump_data",
    "classify_case", "energy", "evolve", "fit_decay_exponent", "integral_J", "integrate_curve",
    "is_null_form", "katayama_substitution", "kg_ray_transport", "kirchhoff_solve", "lambda_minus",
    "manufactured_forcing", "null00_bound_ratio", "run_with_diagnostics", "sample_hyperboloid",
    "sharp_gradient_bound", "solve_transport", "source_l2_report", "step", "to_frame",
]
