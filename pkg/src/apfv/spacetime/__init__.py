"""Geometry-preserving finite volumes for ``d(omega(u)) = 0`` on the cylinder."""

from apfv.spacetime.diagnostics import (
    DissipationBound,
    burgers_riemann_circle,
    dissipation_bound,
    entropy_dissipation_total,
    entropy_residual,
    kruzkov_contraction,
    max_entropy_residual,
    piecewise_l1_distance,
)
from apfv.spacetime.forms import (
    PRESETS,
    FluxField1Form,
    SpacetimeMap,
    flat_burgers,
    geometry_compatibility_check,
    get_preset,
    identity_map,
    linear_growth_constant,
    pullback_flux,
    pullback_shear,
    shear_map,
    theta_reparametrization,
    variable_coefficient,
)
from apfv.spacetime.mesh import SpacetimeTriangulation, mesh_sweep_check
from apfv.spacetime.scheme import (
    DiscreteSpacetimeSolution,
    SlabResult,
    averaged_flux,
    discretize_initial_data,
    face_measure,
    numerical_flux,
    solve_spacetime,
    spacetime_step,
    stable_slab_count,
)

__all__ = [
    "PRESETS", "DiscreteSpacetimeSolution", "DissipationBound", "FluxField1Form",
    "SlabResult", "SpacetimeMap", "SpacetimeTriangulation", "mesh_sweep_check",
    "averaged_flux", "burgers_riemann_circle", "discretize_initial_data",
    "dissipation_bound", "entropy_dissipation_total", "entropy_residual", "face_measure",
    "flat_burgers", "geometry_compatibility_check", "get_preset", "identity_map",
    "kruzkov_contraction", "linear_growth_constant", "max_entropy_residual",
    "numerical_flux", "piecewise_l1_distance", "pullback_flux", "pullback_shear",
    "shear_map", "solve_spacetime", "spacetime_step", "stable_slab_count",
    "theta_reparametrization", "variable_coefficient",
]
