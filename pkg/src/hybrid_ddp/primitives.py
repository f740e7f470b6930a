"""
Planar Mechanics Helpers.

Rotations, planar cross products and friction-cone rows shared by the
pushing and pivoting models.
"""

from typing import Tuple

import numpy as np

# Rotation by +90 degrees.
PERP = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation(theta: float) -> np.ndarray:
    """Return the 2x2 rotation matrix from body to world frame."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_derivative(theta: float) -> np.ndarray:
    """Return d rotation(theta) / d theta."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, -c], [c, -s]])


def twist_rotation(theta: float) -> np.ndarray:
    """Return the 3x3 block-diagonal rotation acting on twists (vx, vy, omega)."""
    R = np.eye(3)
    R[:2, :2] = rotation(theta)
    return R


def twist_rotation_derivative(theta: float) -> np.ndarray:
    dR = np.zeros((3, 3))
    dR[:2, :2] = rotation_derivative(theta)
    return dR


def cross2(a: np.ndarray, b: np.ndarray) -> float:
    """Scalar planar cross product a x b."""
    return float(a[0] * b[1] - a[1] * b[0])


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def friction_cone_rows(
    input_dim: int, normal_index: int, tangent_index: int, mu: float, n_max: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Build ``A u >= b`` rows for ``0 <= f_n <= n_max`` and ``|f_t| <= mu f_n``.

    Args:
        input_dim (int): Size of the full input vector
        normal_index (int): Input coordinate of the normal force
        tangent_index (int): Input coordinate of the tangential force
        mu (float): Friction coefficient
        n_max (float): Maximum normal force

    Returns:
        Tuple[np.ndarray, np.ndarray]: (A, b) with four rows
    """
    A = np.zeros((4, input_dim))
    b = np.zeros(4)
    A[0, normal_index] = 1.0
    A[1, normal_index] = -1.0
    b[1] = -n_max
    A[2, normal_index], A[2, tangent_index] = mu, -1.0
    A[3, normal_index], A[3, tangent_index] = mu, 1.0
    return A, b


def box_rows(input_dim: int, index: int, lower: float, upper: float):
    """Build ``A u >= b`` rows for ``lower <= u[index] <= upper``."""
    A = np.zeros((2, input_dim))
    A[0, index] = 1.0
    A[1, index] = -1.0
    return A, np.array([lower, -upper])
