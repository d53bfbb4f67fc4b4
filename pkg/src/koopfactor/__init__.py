"""Koopman eigenfunctions of point and cycle attractors."""

from .classify import cycle_monomials, monomial_basis_for_mu, point_lattice
from .cycle import (asymptotic_phase_at, build_isostable_model, build_phase_model,
                    cycle_eigenvalue_lattice, floquet_normal_form, isostable_at)
from .evaluate import (DivergenceDetected, EigenfunctionModel, grid_eval, laplace_average_at,
                       refine_at, semiconjugacy_residual)
from .factor import (DegenerateSolvable, ResonantObstruction, approximate_factor,
                     homological_spectrum, residual_order_check, sternberg_factor)
from .flow import FlowHandle, find_fixed_point, find_periodic_orbit, flow_to, time_one_map_jet
from .parser import parse_field
from .spectral import check_hypotheses, check_k_nonresonant, seed_covector, spectral_spread

__version__ = "0.1.0"

__all__ = [
    "DegenerateSolvable", "DivergenceDetected", "EigenfunctionModel", "FlowHandle",
    "ResonantObstruction", "approximate_factor", "asymptotic_phase_at", "build_isostable_model",
    "build_phase_model", "check_hypotheses", "check_k_nonresonant", "cycle_eigenvalue_lattice",
    "cycle_monomials", "find_fixed_point", "find_periodic_orbit", "floquet_normal_form", "flow_to",
    "grid_eval", "homological_spectrum", "isostable_at", "laplace_average_at", "monomial_basis_for_mu",
    "parse_field", "point_lattice", "refine_at", "residual_order_check", "semiconjugacy_residual",
    "seed_covector", "spectral_spread", "sternberg_factor", "time_one_map_jet",
]
