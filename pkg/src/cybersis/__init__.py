"""Optimal proactive/reactive cyber-risk controls for a controlled stochastic
SIS model, computed by policy improvement with Monte-Carlo boundary data."""

from .bvp import BoundaryCondition, Grid, PolicyField, ValueField, solve_bellman
from .estimator import PolicyIterationController
from .model import ControlPair, CostParams, ModelParams, UpdateMode, update_controls
from .pia import PiaConfig, PiaResult, run
from .sde_mc import McConfig, boundary_data, estimate_cost

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "ControlPair",
    "CostParams",
    "Grid",
    "McConfig",
    "ModelParams",
    "PiaConfig",
    "PiaResult",
    "PolicyField",
    "PolicyIterationController",
    "UpdateMode",
    "ValueField",
    "boundary_data",
    "estimate_cost",
    "run",
    "solve_bellman",
    "update_controls",
]
