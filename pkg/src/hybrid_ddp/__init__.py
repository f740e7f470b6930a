"""
Hybrid DDP Package.

A Python package for planning contact-switching manipulation primitives
with input-constrained differential dynamic programming. A small tree
search enumerates contact-mode sequences, optimizes each leaf with a few
constrained DDP iterations, and refines the winner into a trajectory with
a stabilizing feedback law.

This package provides:
- solve_qp: Dense convex QP solver with active-set reporting
- solve: Input-constrained DDP for a fixed mode schedule
- plan: Hybrid tree search over contact-mode sequences
- PlanarPushingModel / PlanarPivotingModel: Quasi-static pushing and
  dynamic pivoting primitives
- simulate_closed_loop / ablation_sweep: Noisy execution and sweeps

Example usage:
    >>> import numpy as np
    >>> from hybrid_ddp import HybridConfig, PlanarPushingModel, QuadraticCost, plan
    >>>
    >>> model = PlanarPushingModel()
    >>> cost = QuadraticCost(
    ...     Q=np.array([10.0, 10.0, 1.0]),
    ...     R=np.array([0.1, 0.1]),
    ...     Q_N=np.array([2000.0, 2000.0, 500.0]),
    ...     goal=np.zeros(3),
    ...     angle_indices=model.angle_indices,
    ... )
    >>> config = HybridConfig(n_switches=1, enabled_modes=(0, 1, 2))
    >>> result = plan(model, cost, np.array([-0.15, -0.1, 0.0]), config)
    >>> result.best.label
    >>>
    >>> # Using an experiment preset
    >>> from hybrid_ddp import load_preset, setup_logging
    >>> setup_logging("DEBUG")
    >>> experiment = load_preset("pushing-three-contacts")
"""

__version__ = "1.0.0"

# Import main classes for easy access
from .config import (
    ExperimentConfig,
    load_config_from_env,
    load_experiment_config,
    load_preset,
    print_config_template,
    setup_logging,
)
from .ddp import ControlLaw, DDPConfig, DDPResult, solve
from .errors import HybridDDPError
from .hybrid_planner import HybridConfig, HybridPlan, ModeSequence, NoPlanError, plan
from .pivoting import PivotingMode, PivotingParams, PlanarPivotingModel
from .pushing import PlanarPushingModel, PushingMode, PushingParams
from .qp_solver import (
    InputConstraintSet,
    QPSolution,
    QuadraticProgram,
    project_feasible,
    solve_qp,
)
from .simulation import (
    NoiseModel,
    SuccessCriteria,
    ablation_sweep,
    feedback_study,
    simulate_closed_loop,
)
from .trajectory import DynamicsModel, QuadraticCost, Trajectory, rollout, total_cost

__all__ = [
    "ExperimentConfig",
    "load_config_from_env",
    "load_experiment_config",
    "load_preset",
    "print_config_template",
    "setup_logging",
    "ControlLaw",
    "DDPConfig",
    "DDPResult",
    "solve",
    "HybridDDPError",
    "HybridConfig",
    "HybridPlan",
    "ModeSequence",
    "NoPlanError",
    "plan",
    "PivotingMode",
    "PivotingParams",
    "PlanarPivotingModel",
    "PlanarPushingModel",
    "PushingMode",
    "PushingParams",
    "InputConstraintSet",
    "QPSolution",
    "QuadraticProgram",
    "project_feasible",
    "solve_qp",
    "NoiseModel",
    "SuccessCriteria",
    "ablation_sweep",
    "feedback_study",
    "simulate_closed_loop",
    "DynamicsModel",
    "QuadraticCost",
    "Trajectory",
    "rollout",
    "total_cost",
]
