"""
Test configuration and fixtures for hybrid_ddp tests.

This module provides common test fixtures and configuration
used across all test modules, including a linear test model whose
optimal unconstrained solution is known from the Riccati recursion.
"""

import os
from typing import List, Optional, Tuple
from unittest.mock import patch

import numpy as np
import pytest

from hybrid_ddp.ddp import ControlLaw
from hybrid_ddp.hybrid_planner import (
    HybridConfig,
    HybridPlan,
    ModeSequence,
    PlanningTime,
)
from hybrid_ddp.pivoting import PivotingParams, PlanarPivotingModel
from hybrid_ddp.primitives import box_rows
from hybrid_ddp.pushing import PlanarPushingModel, PushingParams
from hybrid_ddp.qp_solver import BoxRegion, InputConstraintSet
from hybrid_ddp.trajectory import DynamicsModel, QuadraticCost, rollout


class LinearModel(DynamicsModel):
    """
    Linear time-invariant test dynamics x+ = A x + B u shared by every mode.

    An optional symmetric bound |u_i| <= input_bound turns it into a
    box-constrained problem with closed-form projection.
    """

    name = "linear"

    def __init__(
        self,
        A: np.ndarray,
        B: np.ndarray,
        input_bound: Optional[float] = None,
        modes: Tuple[int, ...] = (0,),
        dt: float = 0.1,
    ):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.input_bound = input_bound
        self._modes = tuple(modes)
        self.dt = dt

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def modes(self) -> Tuple[int, ...]:
        return self._modes

    def step(self, x, u, mode):
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def step_duration(self, u) -> float:
        return self.dt

    def constraints(self, x, mode) -> InputConstraintSet:
        m = self.input_dim
        if self.input_bound is None:
            return InputConstraintSet.unconstrained(m)
        blocks = [box_rows(m, i, -self.input_bound, self.input_bound) for i in range(m)]
        return InputConstraintSet(
            A=np.vstack([A for A, _ in blocks]),
            b=np.concatenate([b for _, b in blocks]),
            G=np.zeros((0, m)),
            h=np.zeros(0),
            regions=tuple(
                BoxRegion(i, -self.input_bound, self.input_bound) for i in range(m)
            ),
        )

    def equilibrium_constraints(self, x, mode) -> InputConstraintSet:
        x = np.asarray(x, dtype=float)
        return self.constraints(x, mode).with_equalities(self.B, x - self.A @ x)

    def jacobians(self, x, u, mode):
        return self.A.copy(), self.B.copy()


def riccati_gains(
    A: np.ndarray, B: np.ndarray, cost: QuadraticCost, horizon: int
) -> List[np.ndarray]:
    """
    Optimal LQR gains u_k = K_k x_k for J = x_N' Q_N x_N + sum x' Q x + u' R u.

    The goal must be the origin.
    """
    Q, R, P = np.diag(cost.Q), np.diag(cost.R), np.diag(cost.Q_N)
    gains: List[np.ndarray] = []
    for _ in range(horizon):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ A + A.T @ P @ B @ K
        P = 0.5 * (P + P.T)
        gains.append(K)
    return gains[::-1]


@pytest.fixture
def double_integrator():
    """
    Double integrator with dt = 0.1 and no input constraints.

    Returns:
        LinearModel: Test model
    """
    dt = 0.1
    return LinearModel(
        A=np.array([[1.0, dt], [0.0, 1.0]]), B=np.array([[0.0], [dt]]), dt=dt
    )


@pytest.fixture
def bounded_double_integrator():
    """
    Double integrator with |u| <= 0.2.

    Returns:
        LinearModel: Test model
    """
    dt = 0.1
    return LinearModel(
        A=np.array([[1.0, dt], [0.0, 1.0]]),
        B=np.array([[0.0], [dt]]),
        input_bound=0.2,
        dt=dt,
    )


@pytest.fixture
def linear_cost():
    """Quadratic cost driving the double integrator to the origin."""
    return QuadraticCost(
        Q=np.array([1.0, 1.0]),
        R=np.array([0.1]),
        Q_N=np.array([10.0, 10.0]),
        goal=np.zeros(2),
    )


@pytest.fixture
def pushing_model():
    """Pushing model with the preset friction values."""
    return PlanarPushingModel(PushingParams(mu_ground=0.3))


@pytest.fixture
def pushing_cost(pushing_model):
    """Pushing cost towards the origin pose."""
    return QuadraticCost(
        Q=np.array([10.0, 10.0, 1.0]),
        R=np.array([0.1, 0.1]),
        Q_N=np.array([2000.0, 2000.0, 500.0]),
        goal=np.zeros(3),
        angle_indices=pushing_model.angle_indices,
    )


@pytest.fixture
def pivoting_model():
    """Pivoting model with default parameters."""
    return PlanarPivotingModel(PivotingParams())


@pytest.fixture
def pivoting_cost(pivoting_model):
    """Pivoting cost towards 10 degrees at rest."""
    return QuadraticCost(
        Q=np.array([10.0, 0.1]),
        R=np.full(4, 1e-3),
        Q_N=np.array([1000.0, 100.0]),
        goal=np.array([np.deg2rad(10.0), 0.0]),
        angle_indices=pivoting_model.angle_indices,
    )


@pytest.fixture
def small_hybrid_config():
    """
    Tree-search settings small enough for unit tests.

    Returns:
        HybridConfig: Left contact only, short horizon
    """
    return HybridConfig(
        n_switches=0,
        enabled_modes=(0,),
        horizon=8,
        tree_iterations=2,
        final_iterations=10,
    )


@pytest.fixture
def straight_push_plan(pushing_model, pushing_cost):
    """
    Hand-built plan pushing straight along +x with the left contact.

    Returns:
        HybridPlan: Plan with zero feedback gains
    """
    horizon = 6
    inputs = np.tile([0.3, 0.0], (horizon, 1))
    modes = (0,) * horizon
    traj = rollout(pushing_model, np.array([-0.1, 0.0, 0.0]), inputs, modes)
    return HybridPlan(
        best=ModeSequence((0,)),
        trajectory=traj,
        law=ControlLaw.zeros(horizon, 3, 2),
        leaf_table=(),
        planning_time=PlanningTime(0.0, 0.0),
        goal=pushing_cost.goal,
        cost=0.0,
        model="pushing",
    )


@pytest.fixture
def experiment_document():
    """
    Minimal valid pushing experiment document (angles in degrees).

    Returns:
        Dict: Decoded JSON document
    """
    return {
        "name": "unit-pushing",
        "seed": 7,
        "model": {"kind": "pushing", "params": {"mu_ground": 0.3}},
        "hybrid": {
            "n_switches": 0,
            "enabled_modes": [0],
            "horizon": 4,
            "tree_iterations": 1,
            "final_iterations": 2,
        },
        "cost": {
            "Q": [10.0, 10.0, 1.0],
            "R": [0.1, 0.1],
            "Q_N": [2000.0, 2000.0, 500.0],
            "goal": [0.0, 0.0, 90.0],
        },
        "initial_conditions": {"states": [[-0.05, 0.0, 90.0]]},
        "noise": {"state_std": [0.001, 0.001, 0.5], "input_std": [0.0, 0.0]},
    }


@pytest.fixture
def mock_environment_variables():
    """
    Mock environment variables for testing configuration.

    Returns:
        Dict: Dictionary of environment variables
    """
    env_vars = {
        "HYBRID_DDP_LOG_LEVEL": "DEBUG",
        "HYBRID_DDP_WORKERS": "3",
        "HYBRID_DDP_OUTPUT_DIR": "env-results",
        "HYBRID_DDP_SEED": "11",
    }

    with patch.dict(os.environ, env_vars, clear=True):
        yield env_vars


@pytest.fixture(autouse=True)
def reset_environment():
    """Reset environment variables after each test."""
    original_env = os.environ.copy()
    yield
    os.environ.clear()
    os.environ.update(original_env)
