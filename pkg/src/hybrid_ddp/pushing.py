"""
Quasi-static Planar Pushing Module.

A square object slides on a frictional support while a point pusher holds a
sticking contact at the midpoint of one of its four sides. The applied force
maps to the object twist through the ellipsoidal limit surface::

    twist = R(theta) L J_i^T f_i
    x_{k+1} = x_k + dt * twist

State is (x, y, theta) of the object in the world frame. Inputs are
(f_n, f_t) in the active contact frame, optionally followed by the step
length dt when variable time steps are enabled.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .primitives import (
    PERP,
    box_rows,
    friction_cone_rows,
    twist_rotation,
    twist_rotation_derivative,
)
from .qp_solver import BoxRegion, ConeRegion, InputConstraintSet
from .trajectory import DynamicsModel

logger = logging.getLogger(__name__)


class PushingMode(enum.IntEnum):
    """Side of the object the pusher touches."""

    LEFT = 0
    BOTTOM = 1
    RIGHT = 2
    TOP = 3


# Outward direction from the object center to each side midpoint.
_SIDE_DIRECTIONS = {
    PushingMode.LEFT: np.array([-1.0, 0.0]),
    PushingMode.BOTTOM: np.array([0.0, -1.0]),
    PushingMode.RIGHT: np.array([1.0, 0.0]),
    PushingMode.TOP: np.array([0.0, 1.0]),
}


@dataclass(frozen=True)
class PushingParams:
    """
    Physical parameters of the pusher-slider system (SI units).

    Attributes:
        half_length (float): Half of the square side length
        mass (float): Object mass
        mu_contact (float): Pusher-object friction coefficient
        mu_ground (float): Object-support friction coefficient
        n_max (float): Maximum pusher normal force
        dt (float): Step length when time steps are fixed
        gravity (float): Gravitational acceleration
        moment_ratio (float): m_max / (a f_max) of the support distribution.
            The pushing presets set 0.6 explicitly; a uniform square gives
            uniform_square_moment_ratio(), about 0.765
        variable_timestep (bool): Append dt to the input vector
        dt_bounds (Tuple[float, float]): Box on dt when variable
    """

    half_length: float = 0.045
    mass: float = 1.0
    mu_contact: float = 0.3
    mu_ground: float = 0.35
    n_max: float = 0.5
    dt: float = 0.5
    gravity: float = 9.81
    moment_ratio: float = 0.6
    variable_timestep: bool = False
    dt_bounds: Tuple[float, float] = (0.1, 1.0)

    def __post_init__(self):
        """Validate parameters after initialization."""
        for name in (
            "half_length",
            "mass",
            "mu_contact",
            "mu_ground",
            "n_max",
            "dt",
            "gravity",
            "moment_ratio",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        lower, upper = self.dt_bounds
        if not 0 < lower <= upper:
            raise ValueError("dt_bounds must satisfy 0 < lower <= upper")
        object.__setattr__(self, "dt_bounds", (float(lower), float(upper)))

    @property
    def f_max(self) -> float:
        return self.mu_ground * self.mass * self.gravity

    @property
    def m_max(self) -> float:
        return self.moment_ratio * self.half_length * self.f_max


def limit_surface_matrix(params: PushingParams) -> np.ndarray:
    """Return L = diag(1/f_max^2, 1/f_max^2, 1/m_max^2)."""
    return np.diag(
        [1.0 / params.f_max**2, 1.0 / params.f_max**2, 1.0 / params.m_max**2]
    )


def uniform_square_moment_ratio(samples: int = 200_000, seed: int = 0) -> float:
    """
    Monte-Carlo estimate of E|r| / a for uniform pressure on a square of half side a.

    For a uniform support distribution, m_max / f_max equals the mean distance
    of the support points from the center.
    """
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(samples, 2))
    return float(np.mean(np.linalg.norm(points, axis=1)))


def contact_point(mode: int, params: PushingParams) -> np.ndarray:
    """Body-frame position of the active side midpoint."""
    return params.half_length * _SIDE_DIRECTIONS[PushingMode(mode)]


def contact_frame(mode: int) -> np.ndarray:
    """Return the 2x2 matrix [n t] of the inward normal and tangent in body frame."""
    normal = -_SIDE_DIRECTIONS[PushingMode(mode)]
    tangent = PERP @ normal
    return np.column_stack([normal, tangent])


def contact_jacobian(mode: int, params: PushingParams) -> np.ndarray:
    """Return J = [[1, 0, -p_y], [0, 1, p_x]] for the active contact point."""
    return point_jacobian(contact_point(mode, params))


def point_jacobian(point: np.ndarray) -> np.ndarray:
    p_x, p_y = point
    return np.array([[1.0, 0.0, -p_y], [0.0, 1.0, p_x]])


def _force_to_body_twist(mode: int, params: PushingParams) -> np.ndarray:
    """3x2 matrix mapping contact-frame force to body twist."""
    J = contact_jacobian(mode, params)
    return limit_surface_matrix(params) @ J.T @ contact_frame(mode)


def pushing_twist(
    x: np.ndarray, u: np.ndarray, mode: int, params: PushingParams
) -> np.ndarray:
    """World-frame object twist (vx, vy, omega) under contact force u[:2]."""
    body_twist = _force_to_body_twist(mode, params) @ np.asarray(u, dtype=float)[:2]
    return twist_rotation(x[2]) @ body_twist


def step_length(u: np.ndarray, params: PushingParams) -> float:
    return float(u[2]) if params.variable_timestep else params.dt


def pushing_step(
    x: np.ndarray, u: np.ndarray, mode: int, params: PushingParams
) -> np.ndarray:
    """Advance the object pose by one explicit Euler step."""
    x = np.asarray(x, dtype=float)
    return x + step_length(u, params) * pushing_twist(x, u, mode, params)


def pushing_constraints(
    x: np.ndarray, mode: int, params: PushingParams
) -> InputConstraintSet:
    """Friction cone and normal bound on (f_n, f_t), plus the dt box when variable."""
    m = 3 if params.variable_timestep else 2
    A, b = friction_cone_rows(m, 0, 1, params.mu_contact, params.n_max)
    regions = [ConeRegion(0, 1, params.mu_contact, params.n_max)]

    if params.variable_timestep:
        lower, upper = params.dt_bounds
        A_box, b_box = box_rows(m, 2, lower, upper)
        A = np.vstack([A, A_box])
        b = np.concatenate([b, b_box])
        regions.append(BoxRegion(2, lower, upper))

    return InputConstraintSet(
        A=A, b=b, G=np.zeros((0, m)), h=np.zeros(0), regions=tuple(regions)
    )


class PlanarPushingModel(DynamicsModel):
    """
    Hybrid pushing dynamics with one mode per object side.

    Attributes:
        params (PushingParams): Physical parameters
    """

    name = "pushing"

    def __init__(self, params: Optional[PushingParams] = None):
        self.params = params or PushingParams()

    def __repr__(self) -> str:
        return f"PlanarPushingModel({self.params!r})"

    @property
    def state_dim(self) -> int:
        return 3

    @property
    def input_dim(self) -> int:
        return 3 if self.params.variable_timestep else 2

    @property
    def modes(self) -> Tuple[int, ...]:
        return tuple(int(mode) for mode in PushingMode)

    @property
    def angle_indices(self) -> Tuple[int, ...]:
        return (2,)

    def step(self, x: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
        return pushing_step(x, u, mode, self.params)

    def step_duration(self, u: np.ndarray) -> float:
        return step_length(u, self.params)

    def constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        self.validate_mode(mode)
        return pushing_constraints(x, mode, self.params)

    def equilibrium_constraints(self, x: np.ndarray, mode: int) -> InputConstraintSet:
        E = np.zeros((3, self.input_dim))
        E[:, :2] = _force_to_body_twist(mode, self.params)
        return self.constraints(x, mode).with_equalities(E, np.zeros(3))

    def jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        dt = step_length(u, self.params)
        force_map = _force_to_body_twist(mode, self.params)
        body_twist = force_map @ u[:2]

        f_x = np.eye(3)
        f_x[:, 2] += dt * twist_rotation_derivative(x[2]) @ body_twist

        f_u = np.zeros((3, self.input_dim))
        f_u[:, :2] = dt * twist_rotation(x[2]) @ force_map
        if self.params.variable_timestep:
            f_u[:, 2] = twist_rotation(x[2]) @ body_twist
        return f_x, f_u

    def constraint_jacobians(
        self, x: np.ndarray, u: np.ndarray, mode: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        # Body-frame inputs: the constraint set is the same at every pose.
        cons = self.constraints(x, mode)
        return np.zeros((cons.A.shape[0], 3)), np.zeros((cons.G.shape[0], 3))

    def reference_input(self, mode: int) -> np.ndarray:
        u = np.zeros(self.input_dim)
        if self.params.variable_timestep:
            u[2] = self.params.dt
        return u
