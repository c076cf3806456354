"""Step graphons, W-random graphs, nonlocal network dynamics and their large deviations."""

__version__ = "0.1.0"

from .dynamics import CouplingSpec, Trajectory, quotient_trajectory_distance, simulate, solve_continuum, trajectory_distance
from .graphon import SignedStepKernel, StepGraphon, cut_norm, d_inf_one, delta_inf_one, inf_one_norm, project
from .ldp import bernstein_bound, estimate_rare_event, legendre_rate, rate_quotient, sparse_rate, upsilon
from .random_graphs import AdjacencyGraph, FiniteLaw, GridFunction, derive_seed, embed, sample_sparse, sample_tilted, sample_w_random
from .staircase import DiscreteCoupling, PiecewiseBijection, staircase_bijection, weak_distance

__all__ = [
    "AdjacencyGraph",
    "CouplingSpec",
    "DiscreteCoupling",
    "FiniteLaw",
    "GridFunction",
    "PiecewiseBijection",
    "SignedStepKernel",
    "StepGraphon",
    "Trajectory",
    "bernstein_bound",
    "cut_norm",
    "d_inf_one",
    "delta_inf_one",
    "derive_seed",
    "embed",
    "estimate_rare_event",
    "inf_one_norm",
    "legendre_rate",
    "project",
    "quotient_trajectory_distance",
    "rate_quotient",
    "sample_sparse",
    "sample_tilted",
    "sample_w_random",
    "simulate",
    "solve_continuum",
    "sparse_rate",
    "staircase_bijection",
    "trajectory_distance",
    "upsilon",
    "weak_distance",
]
