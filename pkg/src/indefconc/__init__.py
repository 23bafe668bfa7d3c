"""Ground states of semilinear Schroedinger equations with sign-changing nonlinearity.

Finite-difference solver and concentration diagnostics for
``-Lap u + V_n u = Q_n |u|^(p-2) u`` where ``Q_n`` is positive only on a
shrinking set.
"""

from .mesh import Grid, RegionMask, ScalarField, build_grid, integrate, lq_norm, norm_n
from .problem import (FamilySpec, KSpec, ProblemInstance, make_family_level_shift, make_family_shrinking_ball,
                      make_instance, make_two_point_family, validate_assumptions)
from .solver import (GroundState, NoAdmissibleStartError, SolverConfig, SolverError, minimize_rayleigh,
                     solve_ground_state)
from .spectral import norm_equivalence_bounds, smallest_eigenvalue
from .analysis import (ConcentrationReport, decay_envelope_check, h1_lp_ratios, lq_tail_scan, q_star,
                       run_concentration_study, singular_constant, two_point_mass_split)

__version__ = "0.1.0"

__all__ = [
    "Grid", "RegionMask", "ScalarField", "build_grid", "integrate", "lq_norm", "norm_n",
    "FamilySpec", "KSpec", "ProblemInstance", "make_family_level_shift", "make_family_shrinking_ball",
    "make_instance", "make_two_point_family", "validate_assumptions",
    "GroundState", "NoAdmissibleStartError", "SolverConfig", "SolverError", "minimize_rayleigh",
    "solve_ground_state", "norm_equivalence_bounds", "smallest_eigenvalue",
    "ConcentrationReport", "decay_envelope_check", "h1_lp_ratios", "lq_tail_scan", "q_star",
    "run_concentration_study", "singular_constant", "two_point_mass_split",
]
