"""Saddle points of the ferrofluid free-boundary functional."""

from ._core import (
    DimensionMismatch,
    DomainSpec,
    FerroError,
    IllPosed,
    InfeasibleVolume,
    MagnetizationLaw,
    NonConvergence,
    NotAGraph,
    PhysicalParams,
    bathtub,
    bottom_distance,
    bubble_census,
    check_saddle,
    eval_J,
    free_surface_residual,
    gain_field,
    graph_from_indicator,
    indicator_from_graph,
    run_saddle,
    solve_config,
    solve_inner,
    solve_outer,
    total_variation,
    verify_norm_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
