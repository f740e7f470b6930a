"""
Trajectory Module.

This module provides the types shared by every other module: the abstract
dynamics model interface, the quadratic tracking cost, and the Trajectory
record, together with rollout, cost evaluation and differentiation
utilities.

Costs use the separable form::

    J = dx_N^T Q_N dx_N + sum_k (dx_k^T Q dx_k + u_k^T R u_k)

where dx is the state minus the goal with angular coordinates wrapped to
(-pi, pi].
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import HybridDDPError
from .primitives import wrap_angle
from .qp_solver import InputConstraintSet

logger = logging.getLogger(__name__)

FINITE_DIFFERENCE_STEP = 1e-6


class TrajectoryError(HybridDDPError):
    """Raised for length or dimension mismatches between trajectories and costs."""

    pass


class DivergedRolloutError(HybridDDPError):
    """Raised when a rollout produces a non-finite state."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"Rollout diverged at step {step}")


class DynamicsModel(ABC):
    """
    Abstract base class for discrete-time hybrid dynamics.

    Subclasses define the step map for each contact mode, the input
    constraints that hold in that mode, and the equality rows that express
    static equilibrium. Models are immutable parameter records, so they can
    be shipped to worker processes.
    """

    name: str = "model"

    @property
    @abstractmethod
    def state_dim(self) -> int:
        pass

    @property
    @abstractmethod
    def input_dim(self) -> int:
        pass

    @property
    @abstractmethod
    def modes(self) -> Tuple[int, ...]:
        """All contact modes this model supports."""
        pass

    @property
    def angle_indices(self) -> Tuple[int, ...]:
        """State coordinates that are angles."""
        return ()

    @abstractmethod
    def step(self, x: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
        """Advance the state by one step."""
        pass

    @abstractmethod
    def constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        """Return the input constraints at state x in the given mode."""
        pass

    @abstractmethod
    def equilibrium_constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        """
        Return the constraints an input must satisfy to hold x at rest in mode.

        This is the mode's constraint set, evaluated at rest, with equality
        rows appended that zero the model's velocity or acceleration output.
        """
        pass

    @abstractmethod
    def step_duration(self, u: np.ndarray) -> float:
        """Return the time covered by one step under input u."""
        pass

    def jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Return analytic (f_x, f_u), or None to fall back to finite differences."""
        return None

    def constraint_jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """
        Return analytic state derivatives of the constraint residuals at fixed u.

        The pair is (d(A u - b)/dx, d(G u - h)/dx), or None to fall back to
        finite differences.
        """
        return None

    def reference_input(self, mode: int) -> np.ndarray:
        """Input that static-equilibrium queries stay closest to."""
        return np.zeros(self.input_dim)

    def validate_mode(self, mode: int) -> None:
        if mode not in self.modes:
            raise ValueError(f"Mode {mode} is not one of {self.modes} for {self.name}")


@dataclass(frozen=True)
class QuadraticCost:
    """
    Quadratic tracking cost with diagonal weights.

    Attributes:
        Q (np.ndarray): Diagonal of the running state weight
        R (np.ndarray): Diagonal of the input weight
        Q_N (np.ndarray): Diagonal of the terminal state weight
        goal (np.ndarray): Goal state
        angle_indices (Tuple[int, ...]): State coordinates wrapped to (-pi, pi]
    """

    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    goal: np.ndarray
    angle_indices: Tuple[int, ...] = ()

    def __post_init__(self):
        """Normalize weights to diagonal vectors and validate them."""
        for name in ("Q", "R", "Q_N"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim == 2:
                if not np.allclose(value, np.diag(np.diag(value))):
                    raise ValueError(f"{name} must be diagonal")
                value = np.diag(value).copy()
            if np.any(value <= 0) or not np.all(np.isfinite(value)):
                raise ValueError(f"{name} must have positive finite diagonal entries")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

        goal = np.asarray(self.goal, dtype=float).copy()
        goal.setflags(write=False)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "angle_indices", tuple(self.angle_indices))

        if self.Q.shape != self.Q_N.shape or self.Q.shape != goal.shape:
            raise ValueError("Q, Q_N and goal must share the state dimension")
        if any(i < 0 or i >= goal.shape[0] for i in self.angle_indices):
            raise ValueError("angle_indices out of range")

    @property
    def state_dim(self) -> int:
        return self.Q.shape[0]

    @property
    def input_dim(self) -> int:
        return self.R.shape[0]

    def state_error(self, x: np.ndarray) -> np.ndarray:
        """Return x - goal with angular coordinates wrapped."""
        dx = np.asarray(x, dtype=float) - self.goal
        for i in self.angle_indices:
            dx[i] = wrap_angle(dx[i])
        return dx

    def running(self, x: np.ndarray, u: np.ndarray) -> float:
        dx = self.state_error(x)
        u = np.asarray(u, dtype=float)
        return float(dx @ (self.Q * dx) + u @ (self.R * u))

    def terminal(self, x: np.ndarray) -> float:
        dx = self.state_error(x)
        return float(dx @ (self.Q_N * dx))


class CostExpansion(NamedTuple):
    """Value and derivatives of the running cost at one point."""

    l: float
    l_x: np.ndarray
    l_u: np.ndarray
    l_xx: np.ndarray
    l_uu: np.ndarray
    l_xu: np.ndarray


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Trajectory:
    """
    State and input sequences with a per-step mode schedule.

    Attributes:
        states (np.ndarray): (N+1) x n states
        inputs (np.ndarray): N x m inputs
        modes (Tuple[int, ...]): Mode active during each of the N steps
        dt (np.ndarray): Duration of each step in seconds
    """

    states: np.ndarray
    inputs: np.ndarray
    modes: Tuple[int, ...]
    dt: np.ndarray = field(default=None)

    def __post_init__(self):
        """Validate lengths and freeze the arrays."""
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        modes = tuple(int(mode) for mode in self.modes)
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.size == 0:
            shape = (len(modes), -1) if len(modes) else (0, 0)
            inputs = inputs.reshape(shape)
        inputs = np.atleast_2d(inputs)
        horizon = len(modes)

        if states.shape[0] != horizon + 1:
            raise TrajectoryError(
                f"Expected {horizon + 1} states for {horizon} steps, "
                f"got {states.shape[0]}"
            )
        if horizon and inputs.shape[0] != horizon:
            raise TrajectoryError(f"Expected {horizon} inputs, got {inputs.shape[0]}")

        dt = np.zeros(horizon) if self.dt is None else np.asarray(self.dt, dtype=float)
        if dt.shape != (horizon,):
            raise TrajectoryError(f"Expected {horizon} step durations, got {dt.shape}")

        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "inputs", _readonly(inputs))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "dt", _readonly(dt))

    @property
    def horizon(self) -> int:
        return len(self.modes)

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to JSON-compatible lists."""
        return {
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "modes": list(self.modes),
            "dt": self.dt.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        """
        Rebuild a trajectory from to_dict output.

        Raises:
            TrajectoryError: If a required key is missing
        """
        missing = [key for key in ("states", "inputs", "modes") if key not in data]
        if missing:
            raise TrajectoryError(
                f"Trajectory document missing keys: {', '.join(missing)}"
            )
        return cls(
            states=data["states"],
            inputs=data["inputs"],
            modes=data["modes"],
            dt=data.get("dt"),
        )


def _check_dimensions(traj: Trajectory, cost: QuadraticCost) -> None:
    if traj.states.shape[1] != cost.state_dim:
        raise TrajectoryError(
            f"State dimension {traj.states.shape[1]} does not match "
            f"cost ({cost.state_dim})"
        )
    if traj.horizon and traj.inputs.shape[1] != cost.input_dim:
        raise TrajectoryError(
            f"Input dimension {traj.inputs.shape[1]} does not match "
            f"cost ({cost.input_dim})"
        )


def total_cost(traj: Trajectory, cost: QuadraticCost) -> float:
    """
    Evaluate the running cost over all N steps plus the terminal cost.

    The running sum starts at k = 0, so the fixed initial state contributes.

    Raises:
        TrajectoryError: If the cost weights do not match the trajectory
    """
    _check_dimensions(traj, cost)
    running = sum(
        cost.running(traj.states[k], traj.inputs[k]) for k in range(traj.horizon)
    )
    return float(running + cost.terminal(traj.final_state))


def rollout(
    model: DynamicsModel,
    x0: np.ndarray,
    inputs: Sequence[np.ndarray],
    modes: Sequence[int],
) -> Trajectory:
    """
    Integrate the model forward from x0 under a fixed input sequence.

    Args:
        model (DynamicsModel): Dynamics to integrate
        x0 (np.ndarray): Initial state
        inputs (Sequence[np.ndarray]): N inputs
        modes (Sequence[int]): N modes

    Returns:
        Trajectory: The resulting trajectory

    Raises:
        TrajectoryError: If inputs and modes disagree in length
        DivergedRolloutError: If a state becomes non-finite
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size != len(modes) * model.input_dim:
        raise TrajectoryError(
            f"Expected {len(modes)} inputs of size {model.input_dim}, "
            f"got shape {inputs.shape}"
        )
    inputs = inputs.reshape(len(modes), model.input_dim)

    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise DivergedRolloutError(0, "Initial state is not finite")

    states: List[np.ndarray] = [x]
    durations: List[float] = []
    for k, (u, mode) in enumerate(zip(inputs, modes)):
        x = model.step(x, u, mode)
        if not np.all(np.isfinite(x)):
            raise DivergedRolloutError(k)
        states.append(x)
        durations.append(model.step_duration(u))

    return Trajectory(states=states, inputs=inputs, modes=tuple(modes), dt=durations)


def finite_difference_jacobians(
    model: DynamicsModel,
    x: np.ndarray,
    u: np.ndarray,
    mode: int,
    eps: float = FINITE_DIFFERENCE_STEP,
) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians of the step map with absolute step eps."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = x.shape[0], u.shape[0]
    f_x = np.zeros((n, n))
    f_u = np.zeros((n, m))

    for i in range(n):
        dx = np.zeros(n)
        dx[i] = eps
        forward, backward = model.step(x + dx, u, mode), model.step(x - dx, u, mode)
        f_x[:, i] = (forward - backward) / (2 * eps)
    for j in range(m):
        du = np.zeros(m)
        du[j] = eps
        forward, backward = model.step(x, u + du, mode), model.step(x, u - du, mode)
        f_u[:, j] = (forward - backward) / (2 * eps)
    return f_x, f_u


def linearize(
    model: DynamicsModel, x: np.ndarray, u: np.ndarray, mode: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (f_x, f_u), analytic when the model provides them."""
    analytic = model.jacobians(x, u, mode)
    if analytic is not None:
        return analytic
    return finite_difference_jacobians(model, x, u, mode)


def _constraint_residuals(
    model: DynamicsModel, x: np.ndarray, u: np.ndarray, mode: int
) -> Tuple[np.ndarray, np.ndarray]:
    cons = model.constraints(x, mode)
    return cons.A @ u - cons.b, cons.G @ u - cons.h


def finite_difference_constraint_jacobians(
    model: DynamicsModel,
    x: np.ndarray,
    u: np.ndarray,
    mode: int,
    eps: float = FINITE_DIFFERENCE_STEP,
) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference state derivatives of (A u - b, G u - h) at fixed u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    ineq, eq = _constraint_residuals(model, x, u, mode)
    n = x.shape[0]
    C_ineq = np.zeros((ineq.shape[0], n))
    C_eq = np.zeros((eq.shape[0], n))

    for i in range(n):
        dx = np.zeros(n)
        dx[i] = eps
        ineq_fwd, eq_fwd = _constraint_residuals(model, x + dx, u, mode)
        ineq_bwd, eq_bwd = _constraint_residuals(model, x - dx, u, mode)
        if ineq_fwd.shape != ineq.shape or ineq_bwd.shape != ineq.shape:
            raise TrajectoryError(
                f"{model.name}: inequality rows change with the state in mode {mode}"
            )
        C_ineq[:, i] = (ineq_fwd - ineq_bwd) / (2 * eps)
        C_eq[:, i] = (eq_fwd - eq_bwd) / (2 * eps)
    return C_ineq, C_eq


def linearize_constraints(
    model: DynamicsModel, x: np.ndarray, u: np.ndarray, mode: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (C_ineq, C_eq), analytic when the model provides them."""
    analytic = model.constraint_jacobians(x, u, mode)
    if analytic is not None:
        return analytic
    return finite_difference_constraint_jacobians(model, x, u, mode)


def state_difference(
    model: DynamicsModel, x: np.ndarray, x_ref: np.ndarray
) -> np.ndarray:
    """Return x - x_ref with the model's angle coordinates wrapped."""
    dx = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
    for i in model.angle_indices:
        dx[i] = wrap_angle(dx[i])
    return dx


def cost_expansion(cost: QuadraticCost, x: np.ndarray, u: np.ndarray) -> CostExpansion:
    """Exact value, gradients and Hessians of the running cost at (x, u)."""
    dx = cost.state_error(x)
    u = np.asarray(u, dtype=float)
    return CostExpansion(
        l=cost.running(x, u),
        l_x=2.0 * cost.Q * dx,
        l_u=2.0 * cost.R * u,
        l_xx=np.diag(2.0 * cost.Q),
        l_uu=np.diag(2.0 * cost.R),
        l_xu=np.zeros((cost.state_dim, cost.input_dim)),
    )


def terminal_expansion(
    cost: QuadraticCost, x: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Return (l_f, gradient, Hessian) of the terminal cost at x."""
    dx = cost.state_error(x)
    return cost.terminal(x), 2.0 * cost.Q_N * dx, np.diag(2.0 * cost.Q_N)
