"""
Dynamic Planar Pivoting Module.

A rectangular object rotates in the vertical plane about its lower-left
corner P0, which sticks to the ground at the world origin. A second contact
touches one of the other corners P1..P3 along a line at 45 degrees to both
adjacent sides.

State is (theta, theta_dot). Inputs are::

    u = (f_n, f_t, f0_x, f0_y)

with (f_n, f_t) the active contact force in its corner frame and
(f0_x, f0_y) the ground reaction at the pivot in the world frame.

Moments are taken about the center of mass in the world frame, which makes
the angular acceleration linear in u. The linear momentum balance of the
center of mass becomes the equality rows G(x) u = h(x).
"""

import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .primitives import PERP, cross2, friction_cone_rows, rotation
from .qp_solver import InputConstraintSet
from .trajectory import DynamicsModel

logger = logging.getLogger(__name__)


class PivotingMode(enum.IntEnum):
    """Corner touched by the active contact."""

    LOWER_RIGHT = 1
    UPPER_RIGHT = 2
    UPPER_LEFT = 3


_CORNER_SIGNS = {
    0: (-1.0, -1.0),
    1: (1.0, -1.0),
    2: (1.0, 1.0),
    3: (-1.0, 1.0),
}


@dataclass(frozen=True)
class PivotingParams:
    """
    Physical parameters of the pivoting object (SI units).

    Attributes:
        width (float): Object width
        height (float): Object height
        mass (float): Object mass, uniform density
        mu (float): Friction coefficient at every contact
        n_max (float): Normal force bound at every contact
        dt (float): Step length
        gravity (float): Gravitational acceleration
    """

    width: float = 0.1
    height: float = 0.1
    mass: float = 0.1
    mu: float = 0.5
    n_max: float = 10.0
    dt: float = 0.05
    gravity: float = 9.81

    def __post_init__(self):
        """Validate parameters after initialization."""
        for name in ("width", "height", "mass", "mu", "n_max", "dt", "gravity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def inertia(self) -> float:
        """Moment of inertia about the center of mass."""
        return self.mass * (self.width**2 + self.height**2) / 12.0

    def with_aspect_ratio(self, ratio: float) -> "PivotingParams":
        """Return a copy with height = ratio * width and the same mass."""
        return replace(self, height=ratio * self.width)


def corner(index: int, params: PivotingParams) -> np.ndarray:
    """Body-frame position of corner P<index> relative to the center of mass."""
    sx, sy = _CORNER_SIGNS[index]
    return np.array([sx * params.width / 2.0, sy * params.height / 2.0])


def corner_frame(mode: int) -> np.ndarray:
    """Return [n t] for the inward corner bisector normal of the active corner."""
    sx, sy = _CORNER_SIGNS[PivotingMode(mode)]
    normal = -np.array([sx, sy]) / np.sqrt(2.0)
    return np.column_stack([normal, PERP @ normal])


def com_position(theta: float, params: PivotingParams) -> np.ndarray:
    """World position of the center of mass with the pivot at the origin."""
    return -rotation(theta) @ corner(0, params)


def acceleration_row(theta: float, mode: int, params: PivotingParams) -> np.ndarray:
    """Return a with theta_ddot = a . u at the given orientation."""
    r_i = corner(mode, params)
    frame = corner_frame(mode)
    pivot_arm = rotation(theta) @ corner(0, params)

    a = np.zeros(4)
    # Both vectors rotate together, so the active-contact moments are theta-invariant.
    a[0] = cross2(r_i, frame[:, 0])
    a[1] = cross2(r_i, frame[:, 1])
    a[2] = -pivot_arm[1]
    a[3] = pivot_arm[0]
    return a / params.inertia


def force_map(theta: float, mode: int) -> np.ndarray:
    """2x4 matrix B with B u the net contact force in the world frame."""
    B = np.zeros((2, 4))
    B[:, :2] = rotation(theta) @ corner_frame(mode)
    B[:, 2:] = np.eye(2)
    return B


def pivoting_accel(
    x: np.ndarray, u: np.ndarray, mode: int, params: PivotingParams
) -> float:
    """Angular acceleration from moments about the center of mass."""
    return float(acceleration_row(x[0], mode, params) @ np.asarray(u, dtype=float))


def pivoting_step(
    x: np.ndarray, u: np.ndarray, mode: int, params: PivotingParams
) -> np.ndarray:
    """Explicit Euler step of (theta, theta_dot)."""
    theta, theta_dot = float(x[0]), float(x[1])
    theta_ddot = pivoting_accel(x, u, mode, params)
    return np.array(
        [theta + params.dt * theta_dot, theta_dot + params.dt * theta_ddot]
    )


def momentum_equality(
    x: np.ndarray, mode: int, params: PivotingParams
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear momentum balance of the center of mass as G u = h.

    With p_c the center of mass, m p_c'' = B u + m g and
    p_c'' = theta_ddot * PERP p_c - theta_dot^2 p_c.
    """
    theta, theta_dot = float(x[0]), float(x[1])
    m = params.mass
    p_c = com_position(theta, params)
    a = acceleration_row(theta, mode, params)
    G = m * np.outer(PERP @ p_c, a) - force_map(theta, mode)
    h = m * theta_dot**2 * p_c + m * np.array([0.0, -params.gravity])
    return G, h


def pivoting_constraints(
    x: np.ndarray, mode: int, params: PivotingParams
) -> InputConstraintSet:
    """Friction cones at both contacts and the momentum equality."""
    A_active, b_active = friction_cone_rows(4, 0, 1, params.mu, params.n_max)
    A_ground, b_ground = friction_cone_rows(4, 3, 2, params.mu, params.n_max)
    G, h = momentum_equality(x, mode, params)
    return InputConstraintSet(
        A=np.vstack([A_active, A_ground]),
        b=np.concatenate([b_active, b_ground]),
        G=G,
        h=h,
    )


def pivoting_constraint_jacobians(
    x: np.ndarray, u: np.ndarray, mode: int, params: PivotingParams
) -> Tuple[np.ndarray, np.ndarray]:
    """
    State derivatives of the cone residuals and of G(x) u - h(x) at fixed u.

    The cones do not depend on the state. For the momentum rows, p_c and the
    pivot arm both rotate with theta, so their derivatives are PERP times
    themselves.
    """
    theta, theta_dot = float(x[0]), float(x[1])
    u = np.asarray(u, dtype=float)
    m = params.mass
    p_c = com_position(theta, params)
    dp_c = PERP @ p_c
    d_pivot_arm = -dp_c

    a = acceleration_row(theta, mode, params)
    da = np.zeros(4)
    da[2] = -d_pivot_arm[1] / params.inertia
    da[3] = d_pivot_arm[0] / params.inertia

    dB = np.zeros((2, 4))
    dB[:, :2] = PERP @ rotation(theta) @ corner_frame(mode)
    dG = m * np.outer(PERP @ dp_c, a) + m * np.outer(PERP @ p_c, da) - dB

    C_eq = np.zeros((2, 2))
    C_eq[:, 0] = dG @ u - m * theta_dot**2 * dp_c
    C_eq[:, 1] = -2.0 * m * theta_dot * p_c
    n_rows = pivoting_constraints(x, mode, params).A.shape[0]
    return np.zeros((n_rows, 2)), C_eq


class PlanarPivotingModel(DynamicsModel):
    """
    Hybrid pivoting dynamics with one mode per non-pivot corner.

    Attributes:
        params (PivotingParams): Physical parameters
    """

    name = "pivoting"

    def __init__(self, params: Optional[PivotingParams] = None):
        self.params = params or PivotingParams()

    def __repr__(self) -> str:
        return f"PlanarPivotingModel({self.params!r})"

    @property
    def state_dim(self) -> int:
        return 2

    @property
    def input_dim(self) -> int:
        return 4

    @property
    def modes(self) -> Tuple[int, ...]:
        return tuple(int(mode) for mode in PivotingMode)

    @property
    def angle_indices(self) -> Tuple[int, ...]:
        return (0,)

    def step(self, x: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
        return pivoting_step(x, u, mode, self.params)

    def step_duration(self, u: np.ndarray) -> float:
        return self.params.dt

    def constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        self.validate_mode(mode)
        return pivoting_constraints(x, mode, self.params)

    def equilibrium_constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        at_rest = np.array([float(x[0]), 0.0])
        a = acceleration_row(at_rest[0], mode, self.params)
        return self.constraints(at_rest, mode).with_equalities(a[None, :], [0.0])

    def jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        dt = self.params.dt
        pivot_arm = rotation(float(x[0])) @ corner(0, self.params)
        # d/dtheta of the ground-force moment arms
        d_accel = (-pivot_arm[0] * u[2] - pivot_arm[1] * u[3]) / self.params.inertia

        f_x = np.array([[1.0, dt], [dt * d_accel, 1.0]])
        f_u = np.zeros((2, 4))
        f_u[1] = dt * acceleration_row(float(x[0]), mode, self.params)
        return f_x, f_u

    def constraint_jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        return pivoting_constraint_jacobians(x, u, mode, self.params)
