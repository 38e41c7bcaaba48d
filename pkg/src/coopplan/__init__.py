"""Decentralized multi-vehicle trajectory planning: per-vehicle iLQR coordinated by dual consensus ADMM."""
from .baseline import solve_centralized
from .model import HyperParams, ScenarioError, ScenarioSpec, Trajectory, compute_dimensions, pair_index
from .planner import PlanResult, plan_decentralized
from .scenario_io import emit, load_scenario, save_scenario
from .scenarios import builtin, generate_intersection, generate_t_junction

__all__ = [
    "HyperParams", "PlanResult", "ScenarioError", "ScenarioSpec", "Trajectory",
    "builtin", "compute_dimensions", "emit", "generate_intersection", "generate_t_junction",
    "load_scenario", "pair_index", "plan_decentralized", "save_scenario", "solve_centralized",
]
__version__ = "0.1.0"
