"""Epigraphical splitting for constrained convex problems.

Closed-form projections onto epigraphs of block norms and distance
functions, a primal-dual forward-backward-forward solver that consumes
them, direct mixed-norm ball projections for comparison, and two
applications (image restoration under TV/NLTV bounds, pulse design).
"""
from ._backend import BACKEND
from .constraints import BlockLayout, DecomposableConstraint, EpiState, check_membership, init_zeta, split
from .epigraph import (Ball2, BoxSet, DistanceToSet, EpiStackProjector, EuclideanNorm, Point,
                       ScalarPower, Subspace, WeightedInfNorm, project_epi_dist,
                       project_epi_generic_scalar, project_epi_l2, project_epi_linf,
                       project_epi_stack)
from .operators import ImageGrid, LinOp
from .prox import PowerProxParams, prox_power_max_sq
from .solver import SolverConfig, SolverProblem, SolverTrace, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Ball2", "BlockLayout", "BoxSet", "DecomposableConstraint", "DistanceToSet",
    "EpiStackProjector", "EpiState", "EuclideanNorm", "ImageGrid", "LinOp", "Point",
    "PowerProxParams", "ScalarPower", "SolverConfig", "SolverProblem", "SolverTrace",
    "Subspace", "WeightedInfNorm", "check_membership", "init_zeta", "project_epi_dist",
    "project_epi_generic_scalar", "project_epi_l2", "project_epi_linf", "project_epi_stack",
    "prox_power_max_sq", "solve", "split",
]
