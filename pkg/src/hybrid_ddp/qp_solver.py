"""
Dense Quadratic Programming Module.

This module provides the small dense QP solver used throughout the package:
the DDP backward pass solves one per step for the feedforward term, the
forward pass projects updated inputs onto the step's constraint set, and the
hybrid planner asks for static-equilibrium inputs.

Problems have the form::

    minimize    1/2 z^T H z + g^T z
    subject to  A_ineq z >= b_ineq
                A_eq   z  = b_eq

Equalities are eliminated through a null-space basis, and the remaining
inequality problem is solved by a primal active-set method.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .errors import HybridDDPError

logger = logging.getLogger(__name__)

# Primal feasibility tolerance shared by the solver and the projection.
FEASIBILITY_TOL = 1e-9
_STEP_TOL = 1e-12
_DUAL_TOL = 1e-12


class QPError(HybridDDPError):
    """Raised for malformed problems, e.g. a Hessian that is not positive definite."""

    pass


class InfeasibleConstraintsError(HybridDDPError):
    """Raised when projecting onto an empty constraint set."""

    pass


class QPStatus(enum.Enum):
    """Termination status of solve_qp."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class ConeRegion:
    """
    Truncated 2-D friction cone on two input coordinates.

    The region is the triangle 0 <= f_n <= n_max, |f_t| <= mu * f_n.

    Attributes:
        normal_index (int): Input coordinate of the normal force
        tangent_index (int): Input coordinate of the tangential force
        mu (float): Friction coefficient
        n_max (float): Normal force bound
    """

    normal_index: int
    tangent_index: int
    mu: float
    n_max: float


@dataclass(frozen=True)
class BoxRegion:
    """Interval bound lower <= u[index] <= upper on one input coordinate."""

    index: int
    lower: float
    upper: float


Region = Union[ConeRegion, BoxRegion]


def _as_matrix(rows: Optional[np.ndarray], m: int) -> np.ndarray:
    if rows is None:
        return np.zeros((0, m))
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        return np.zeros((0, m))
    return np.atleast_2d(rows)


def _as_vector(values: Optional[np.ndarray]) -> np.ndarray:
    if values is None:
        return np.zeros(0)
    return np.atleast_1d(np.asarray(values, dtype=float)).ravel()


@dataclass(frozen=True)
class InputConstraintSet:
    """
    Linear constraints on a control input evaluated at one (state, mode).

    Rows enforce ``A u >= b`` and ``G u = h``. When ``regions`` is non-empty
    the inequality rows describe exactly the product of those regions (and
    there are no equality rows), which lets project_feasible use a
    closed-form projection.

    Attributes:
        A (np.ndarray): p x m inequality matrix
        b (np.ndarray): p-vector of inequality bounds
        G (np.ndarray): q x m equality matrix
        h (np.ndarray): q-vector of equality targets
        regions (Tuple[Region, ...]): Closed-form geometry tags
    """

    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    regions: Tuple[Region, ...] = ()

    def __post_init__(self):
        """Normalize shapes and validate dimensions."""
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        m = max(A.shape[1], G.shape[1])
        A = _as_matrix(A, m)
        G = _as_matrix(G, m)
        b = _as_vector(self.b)
        h = _as_vector(self.h)

        if A.shape[0] != b.shape[0]:
            raise QPError(
                f"Inequality rows mismatch: A has {A.shape[0]} rows, b has {b.shape[0]}"
            )
        if G.shape[0] != h.shape[0]:
            raise QPError(
                f"Equality rows mismatch: G has {G.shape[0]} rows, h has {h.shape[0]}"
            )
        if A.shape[1] != G.shape[1]:
            raise QPError("Inequality and equality blocks disagree on input dimension")

        for name, value in (("A", A), ("b", b), ("G", G), ("h", h)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "regions", tuple(self.regions))

    @classmethod
    def unconstrained(cls, input_dim: int) -> "InputConstraintSet":
        """Return the constraint set with no rows for an input of size input_dim."""
        return cls(
            A=np.zeros((0, input_dim)),
            b=np.zeros(0),
            G=np.zeros((0, input_dim)),
            h=np.zeros(0),
        )

    @property
    def input_dim(self) -> int:
        return self.A.shape[1]

    @property
    def closed_form(self) -> bool:
        """True when projection can use the per-region closed form."""
        return bool(self.regions) and self.G.shape[0] == 0

    def with_equalities(self, G: np.ndarray, h: np.ndarray) -> "InputConstraintSet":
        """Return a copy with extra equality rows appended (drops region tags)."""
        G = _as_matrix(G, self.input_dim)
        return InputConstraintSet(
            A=self.A,
            b=self.b,
            G=np.vstack([self.G, G]),
            h=np.concatenate([self.h, _as_vector(h)]),
        )


@dataclass(frozen=True)
class QuadraticProgram:
    """
    Dense QP ``min 1/2 z^T H z + g^T z`` s.t. ``A_ineq z >= b_ineq``, ``A_eq z = b_eq``.

    Missing constraint blocks default to zero rows.
    """

    H: np.ndarray
    g: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        """Normalize optional blocks to arrays and check dimensions."""
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = _as_vector(self.g)
        m = g.shape[0]
        if H.shape != (m, m):
            raise QPError(f"Hessian shape {H.shape} does not match gradient size {m}")

        A_ineq = _as_matrix(self.A_ineq, m)
        b_ineq = _as_vector(self.b_ineq)
        A_eq = _as_matrix(self.A_eq, m)
        b_eq = _as_vector(self.b_eq)
        if A_ineq.shape != (b_ineq.shape[0], m):
            raise QPError(f"Inequality block has shape {A_ineq.shape}")
        if A_eq.shape != (b_eq.shape[0], m):
            raise QPError(f"Equality block has shape {A_eq.shape}")

        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A_ineq", A_ineq)
        object.__setattr__(self, "b_ineq", b_ineq)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def n_vars(self) -> int:
        return self.g.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.A_ineq.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass(frozen=True)
class QPSolution:
    """
    Result of solve_qp.

    Attributes:
        z (np.ndarray): Minimizer (last iterate when not optimal)
        active_set (Tuple[int, ...]): Inequality rows in the final working set
        status (QPStatus): Termination status
        multipliers (np.ndarray): Inequality multipliers, zero off the active set
        eq_multipliers (np.ndarray): Equality multipliers
        iterations (int): Active-set iterations performed
    """

    z: np.ndarray
    active_set: Tuple[int, ...]
    status: QPStatus
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QPStatus.OPTIMAL


def _check_positive_definite(H: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if not np.allclose(H, H.T, rtol=0.0, atol=1e-10 * scale):
        raise QPError("Hessian is not symmetric")
    if H.size == 0:
        return
    try:
        linalg.cholesky(H, lower=True)
    except linalg.LinAlgError as e:
        raise QPError(
            "Hessian is not positive definite; regularize before solving"
        ) from e


def _eliminate_equalities(
    A_eq: np.ndarray, b_eq: np.ndarray, m: int
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Parametrize {z : A_eq z = b_eq} as z = z_p + Z y.

    Returns:
        Optional[Tuple[np.ndarray, np.ndarray]]: (z_p, Z), or None when the
            equalities are inconsistent
    """
    if A_eq.shape[0] == 0:
        return np.zeros(m), np.eye(m)

    z_p, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
    residual = np.max(np.abs(A_eq @ z_p - b_eq))
    if residual > FEASIBILITY_TOL * (1.0 + np.max(np.abs(b_eq))):
        return None
    return z_p, linalg.null_space(A_eq)


def _phase_one(A: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """
    Find a point with A y >= b by maximizing the smallest slack.

    Solves ``max t`` s.t. ``A y - t >= b``, ``t <= 1``; the system is feasible
    iff the optimal t is non-negative.
    """
    p, r = A.shape
    c = np.zeros(r + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((p, 1))])
    bounds = [(None, None)] * r + [(None, 1.0)]
    result = linprog(c, A_ub=A_ub, b_ub=-b, bounds=bounds, method="highs")
    if result.status != 0 or result.x is None:
        logger.debug(f"Phase-one LP failed: {result.message}")
        return None
    if result.x[-1] < -FEASIBILITY_TOL:
        return None
    return np.asarray(result.x[:r], dtype=float)


def _initial_working_set(A: np.ndarray, b: np.ndarray, y: np.ndarray) -> List[int]:
    """Greedily collect tight rows that are linearly independent, lowest index first."""
    working: List[int] = []
    r = A.shape[1]
    slack = A @ y - b
    for i in np.flatnonzero(slack <= FEASIBILITY_TOL):
        if len(working) >= r:
            break
        candidate = working + [int(i)]
        if np.linalg.matrix_rank(A[candidate]) == len(candidate):
            working = candidate
    return working


def _solve_equality_qp(
    H: np.ndarray, grad: np.ndarray, A_w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve for the step p and working-set multipliers of the equality subproblem."""
    r = H.shape[0]
    w = A_w.shape[0]
    if w == 0:
        return -linalg.cho_solve(linalg.cho_factor(H), grad), np.zeros(0)

    kkt = np.zeros((r + w, r + w))
    kkt[:r, :r] = H
    kkt[:r, r:] = -A_w.T
    kkt[r:, :r] = A_w
    rhs = np.concatenate([-grad, np.zeros(w)])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return solution[:r], solution[r:]


def _active_set_iterations(
    H: np.ndarray,
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    y: np.ndarray,
    max_iterations: int,
) -> Tuple[np.ndarray, List[int], QPStatus, int]:
    """Primal active-set loop on ``min 1/2 y^T H y + c^T y`` s.t. ``A y >= b``."""
    working = _initial_working_set(A, b, y)

    for iteration in range(max_iterations):
        grad = H @ y + c
        step, lam = _solve_equality_qp(H, grad, A[working])

        scale = 1.0 + np.max(np.abs(y), initial=0.0)
        if np.max(np.abs(step), initial=0.0) <= _STEP_TOL * scale:
            if not working or np.min(lam) >= -_DUAL_TOL:
                return y, working, QPStatus.OPTIMAL, iteration
            # argmin returns the first minimum: lowest row index on ties
            working.pop(int(np.argmin(lam)))
            continue

        alpha = 1.0
        blocking = None
        Ap = A @ step
        for i in range(A.shape[0]):
            if i in working or Ap[i] >= -_STEP_TOL:
                continue
            ratio = max(0.0, (b[i] - A[i] @ y) / Ap[i])
            if ratio < alpha:
                alpha = ratio
                blocking = i

        y = y + alpha * step
        if blocking is not None:
            working.append(blocking)
            working.sort()

    return y, working, QPStatus.MAX_ITERATIONS, max_iterations


def _recover_multipliers(
    qp: QuadraticProgram, z: np.ndarray, working: List[int]
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve H z + g = A_W^T lam_W + A_eq^T nu in the least-squares sense."""
    lam = np.zeros(qp.n_ineq)
    basis = np.vstack([qp.A_ineq[working], qp.A_eq])
    if basis.shape[0] == 0:
        return lam, np.zeros(0)
    coeffs, *_ = np.linalg.lstsq(basis.T, qp.H @ z + qp.g, rcond=None)
    lam[working] = coeffs[: len(working)]
    return lam, coeffs[len(working) :]


def solve_qp(qp: QuadraticProgram, z_start: Optional[np.ndarray] = None) -> QPSolution:
    """
    Solve a dense convex QP by null-space elimination and primal active sets.

    The iteration starts from the equality-constrained minimizer when it
    satisfies the inequalities, otherwise from ``z_start`` when that point is
    feasible, otherwise from a max-slack phase-one point.

    Args:
        qp (QuadraticProgram): Problem data; H must be positive definite
        z_start (Optional[np.ndarray]): Optional feasible starting point

    Returns:
        QPSolution: Minimizer, final working set and status

    Raises:
        QPError: If H is not symmetric positive definite
    """
    _check_positive_definite(qp.H)
    m = qp.n_vars
    max_iterations = max(1, 100 * (qp.n_ineq + qp.n_eq))

    eliminated = _eliminate_equalities(qp.A_eq, qp.b_eq, m)
    if eliminated is None:
        logger.debug("QP equality constraints are inconsistent")
        return QPSolution(z=np.zeros(m), active_set=(), status=QPStatus.INFEASIBLE)
    z_p, Z = eliminated

    A = qp.A_ineq @ Z
    b = qp.b_ineq - qp.A_ineq @ z_p
    H = Z.T @ qp.H @ Z
    c = Z.T @ (qp.H @ z_p + qp.g)
    r = Z.shape[1]

    if r == 0:
        y = np.zeros(0)
        if np.any(A @ y < b - FEASIBILITY_TOL):
            return QPSolution(z=z_p, active_set=(), status=QPStatus.INFEASIBLE)
        working = [int(i) for i in np.flatnonzero(np.abs(A @ y - b) <= FEASIBILITY_TOL)]
        status, iterations = QPStatus.OPTIMAL, 0
    else:
        y = -linalg.cho_solve(linalg.cho_factor(H), c)
        if np.all(A @ y >= b - FEASIBILITY_TOL):
            working, status, iterations = [], QPStatus.OPTIMAL, 0
        else:
            y0 = None
            if z_start is not None:
                candidate = Z.T @ (np.asarray(z_start, dtype=float) - z_p)
                if np.all(A @ candidate >= b - FEASIBILITY_TOL):
                    y0 = candidate
            if y0 is None:
                y0 = _phase_one(A, b)
            if y0 is None:
                logger.debug("QP inequality constraints are infeasible")
                return QPSolution(z=z_p, active_set=(), status=QPStatus.INFEASIBLE)
            y, working, status, iterations = _active_set_iterations(
                H, c, A, b, y0, max_iterations
            )
            if status is QPStatus.MAX_ITERATIONS:
                logger.warning(f"QP cycle guard tripped after {iterations} iterations")

    z = z_p + Z @ y
    lam, nu = _recover_multipliers(qp, z, working)
    return QPSolution(
        z=z,
        active_set=tuple(working),
        status=status,
        multipliers=lam,
        eq_multipliers=nu,
        iterations=iterations,
    )


def kkt_residuals(qp: QuadraticProgram, solution: QPSolution) -> Dict[str, float]:
    """
    Evaluate the KKT conditions of a QP at a solution.

    Returns:
        Dict[str, float]: Max-norm residuals keyed by ``stationarity``,
            ``primal_ineq``, ``primal_eq``, ``dual`` and ``complementarity``
    """
    z = solution.z
    lam = solution.multipliers if solution.multipliers.size else np.zeros(qp.n_ineq)
    nu = solution.eq_multipliers if solution.eq_multipliers.size else np.zeros(qp.n_eq)
    slack = qp.A_ineq @ z - qp.b_ineq
    gradient = qp.H @ z + qp.g - qp.A_ineq.T @ lam - qp.A_eq.T @ nu

    return {
        "stationarity": float(np.max(np.abs(gradient), initial=0.0)),
        "primal_ineq": float(np.max(np.maximum(-slack, 0.0), initial=0.0)),
        "primal_eq": float(np.max(np.abs(qp.A_eq @ z - qp.b_eq), initial=0.0)),
        "dual": float(np.max(np.maximum(-lam, 0.0), initial=0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
    }


def check_feasible(cons: InputConstraintSet, u: np.ndarray, tol: float) -> bool:
    """Return True iff ``A u >= b - tol`` and ``|G u - h|_inf <= tol``."""
    u = np.asarray(u, dtype=float)
    if np.any(cons.A @ u < cons.b - tol):
        return False
    return bool(np.all(np.abs(cons.G @ u - cons.h) <= tol))


def _project_segment(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    direction = b - a
    t = np.clip((point - a) @ direction / (direction @ direction), 0.0, 1.0)
    return a + t * direction


def _project_cone(point: np.ndarray, region: ConeRegion) -> np.ndarray:
    f_n, f_t = point
    if 0.0 <= f_n <= region.n_max and abs(f_t) <= region.mu * f_n:
        return point.copy()
    apex = np.zeros(2)
    upper = np.array([region.n_max, region.mu * region.n_max])
    lower = np.array([region.n_max, -region.mu * region.n_max])
    candidates = [
        _project_segment(point, apex, upper),
        _project_segment(point, apex, lower),
        _project_segment(point, lower, upper),
    ]
    distances = [np.sum((c - point) ** 2) for c in candidates]
    return candidates[int(np.argmin(distances))]


def _project_closed_form(u: np.ndarray, cons: InputConstraintSet) -> np.ndarray:
    z = u.copy()
    for region in cons.regions:
        if isinstance(region, ConeRegion):
            idx = [region.normal_index, region.tangent_index]
            z[idx] = _project_cone(u[idx], region)
        else:
            z[region.index] = np.clip(u[region.index], region.lower, region.upper)
    return z


def project_feasible(u: np.ndarray, cons: InputConstraintSet) -> np.ndarray:
    """
    Project an input onto its constraint set in the Euclidean norm.

    Inputs that are already feasible are returned unchanged. Cone and box
    sets are projected in closed form; anything else goes through solve_qp.

    Args:
        u (np.ndarray): Input to project
        cons (InputConstraintSet): Constraint set at the current state and mode

    Returns:
        np.ndarray: The nearest feasible input

    Raises:
        InfeasibleConstraintsError: If the constraint set is empty
    """
    u = np.asarray(u, dtype=float)
    if check_feasible(cons, u, FEASIBILITY_TOL):
        return u.copy()
    if cons.closed_form:
        return _project_closed_form(u, cons)

    qp = QuadraticProgram(
        H=np.eye(u.shape[0]),
        g=-u,
        A_ineq=cons.A,
        b_ineq=cons.b,
        A_eq=cons.G,
        b_eq=cons.h,
    )
    solution = solve_qp(qp)
    if solution.status is QPStatus.INFEASIBLE:
        raise InfeasibleConstraintsError("Cannot project onto an empty constraint set")
    return solution.z
