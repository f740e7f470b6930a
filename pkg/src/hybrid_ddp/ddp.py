"""
Input-Constrained DDP Module.

This module implements differential dynamic programming with linear input
constraints on a fixed mode schedule:

1. The backward pass builds a Gauss-Newton expansion of the action-value
   function at each step and solves a small QP for the feedforward
   correction. Feedback gains follow the active constraints to first order
   in the state and are optimal in the remaining input directions.
2. The forward pass applies the law with a scaled feedforward term,
   projects each input onto its constraint set and rolls the model out.
3. A backtracking line search accepts a step when the actual cost decrease
   is a fixed fraction of the predicted one; regularization grows on
   failure and shrinks on success.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import HybridDDPError
from .qp_solver import (
    InfeasibleConstraintsError,
    InputConstraintSet,
    QPError,
    QPStatus,
    QuadraticProgram,
    project_feasible,
    solve_qp,
)
from .trajectory import (
    CostExpansion,
    DynamicsModel,
    QuadraticCost,
    Trajectory,
    cost_expansion,
    linearize,
    linearize_constraints,
    rollout,
    state_difference,
    terminal_expansion,
    total_cost,
)

logger = logging.getLogger(__name__)

__all__ = [
    "BackwardPassError",
    "ControlLaw",
    "DDPConfig",
    "DDPIterationRecord",
    "DDPResult",
    "ForwardPassError",
    "InputConstraintSet",
    "QExpansion",
    "ValueExpansion",
    "backward_pass",
    "constrained_gain",
    "forward_pass",
    "q_expansion",
    "solve",
]


class BackwardPassError(HybridDDPError):
    """Raised when the backward pass cannot build a law at some step."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"Backward pass failed at step {step}: {message}")


class ForwardPassError(HybridDDPError):
    """Raised when the forward pass diverges or meets an empty constraint set."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"Forward pass failed at step {step}: {message}")


class QExpansion(NamedTuple):
    """Quadratic model of the action-value function around the nominal."""

    q_x: np.ndarray
    q_u: np.ndarray
    Q_xx: np.ndarray
    Q_xu: np.ndarray
    Q_uu: np.ndarray


class ValueExpansion(NamedTuple):
    """Quadratic model of the value function; dV is the expected improvement."""

    dV: float
    V_x: np.ndarray
    V_xx: np.ndarray


@dataclass(frozen=True)
class ControlLaw:
    """
    Time-varying affine law du = k + K dx.

    Attributes:
        feedforward (np.ndarray): N x m feedforward terms
        gains (np.ndarray): N x m x n feedback gains
    """

    feedforward: np.ndarray
    gains: np.ndarray

    def __len__(self) -> int:
        return self.feedforward.shape[0]

    @classmethod
    def zeros(cls, horizon: int, state_dim: int, input_dim: int) -> "ControlLaw":
        return cls(
            feedforward=np.zeros((horizon, input_dim)),
            gains=np.zeros((horizon, input_dim, state_dim)),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Serialize with gains flattened row-major per step."""
        horizon = len(self)
        return {
            "feedforward": self.feedforward.tolist(),
            "gains": self.gains.reshape(horizon, -1).tolist(),
            "gain_shape": list(self.gains.shape[1:]),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ControlLaw":
        input_dim, state_dim = data["gain_shape"]
        feedforward = np.asarray(data["feedforward"], dtype=float)
        horizon = len(data["gains"])
        gains = np.asarray(data["gains"], dtype=float)
        gains = gains.reshape(horizon, input_dim, state_dim)
        return cls(feedforward=feedforward.reshape(horizon, input_dim), gains=gains)


@dataclass(frozen=True)
class DDPConfig:
    """
    Solver settings.

    Attributes:
        max_iterations (int): Iteration cap (anytime)
        cost_tolerance (float): Relative cost decrease that counts as converged
        feedforward_tolerance (float): Max-norm of k that counts as converged
        regularization_init (float): Initial regularization
        regularization_growth (float): Factor applied on failure
        regularization_shrink (float): Factor applied on success
        regularization_min (float): Lower bound
        regularization_max (float): Upper bound; failing at it ends the solve
        line_search_steps (int): Number of step sizes 1, 1/2, ..., 2^-(steps-1)
        accept_ratio (float): Minimum actual / expected improvement
    """

    max_iterations: int = 100
    cost_tolerance: float = 1e-6
    feedforward_tolerance: float = 1e-6
    regularization_init: float = 1e-6
    regularization_growth: float = 10.0
    regularization_shrink: float = 0.5
    regularization_min: float = 1e-9
    regularization_max: float = 1e9
    line_search_steps: int = 11
    accept_ratio: float = 1e-4

    def __post_init__(self):
        """Validate solver settings after initialization."""
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.line_search_steps < 1:
            raise ValueError("line_search_steps must be at least 1")
        for name in (
            "cost_tolerance",
            "feedforward_tolerance",
            "regularization_init",
            "regularization_min",
            "regularization_max",
            "accept_ratio",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.regularization_growth <= 1.0:
            raise ValueError("regularization_growth must exceed 1")
        if not 0.0 < self.regularization_shrink < 1.0:
            raise ValueError("regularization_shrink must lie in (0, 1)")
        if self.regularization_min > self.regularization_max:
            raise ValueError("regularization_min must not exceed regularization_max")

    @property
    def alphas(self) -> Tuple[float, ...]:
        return tuple(2.0**-j for j in range(self.line_search_steps))


@dataclass(frozen=True)
class DDPIterationRecord:
    """One line-search outcome, logged at DEBUG and kept in DDPResult."""

    iteration: int
    cost: float
    alpha: float
    regularization: float
    expected: float
    actual: float
    accepted: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "cost": self.cost,
            "alpha": self.alpha,
            "regularization": self.regularization,
            "expected": self.expected,
            "actual": self.actual,
            "accepted": self.accepted,
        }


@dataclass(frozen=True)
class DDPResult:
    """
    Outcome of a solve.

    Attributes:
        trajectory (Trajectory): Best trajectory found
        law (ControlLaw): Law stabilizing that trajectory
        cost (float): Its total cost
        iterations (int): Backward/forward iterations performed
        converged (bool): Whether a convergence test fired
        cost_log (Tuple[float, ...]): Cost after initialization and each accepted step
        iterations_log (Tuple[DDPIterationRecord, ...]): Line-search records
        solve_time (float): Wall-clock seconds
    """

    trajectory: Trajectory
    law: ControlLaw
    cost: float
    iterations: int
    converged: bool
    cost_log: Tuple[float, ...]
    iterations_log: Tuple[DDPIterationRecord, ...] = ()
    solve_time: float = 0.0


class BackwardPassResult(NamedTuple):
    law: ControlLaw
    expected_linear: float
    expected_quadratic: float

    def expected(self, alpha: float) -> float:
        """Predicted cost decrease for step size alpha (positive means improvement)."""
        return -(alpha * self.expected_linear + alpha**2 * self.expected_quadratic)


def q_expansion(
    value_next: ValueExpansion,
    cost_terms: CostExpansion,
    f_x: np.ndarray,
    f_u: np.ndarray,
    reg: float,
) -> QExpansion:
    """
    Gauss-Newton expansion of the action-value function at one step.

    Regularization enters both through V_xx inside f_u^T (.) f_u and
    directly on Q_uu.
    """
    V_x, V_xx = value_next.V_x, value_next.V_xx
    n, m = f_u.shape

    q_x = cost_terms.l_x + f_x.T @ V_x
    q_u = cost_terms.l_u + f_u.T @ V_x
    Q_xx = cost_terms.l_xx + f_x.T @ V_xx @ f_x
    Q_xu = cost_terms.l_xu + f_x.T @ V_xx @ f_u
    Q_uu = cost_terms.l_uu + f_u.T @ (V_xx + reg * np.eye(n)) @ f_u + reg * np.eye(m)

    return QExpansion(
        q_x=q_x,
        q_u=q_u,
        Q_xx=0.5 * (Q_xx + Q_xx.T),
        Q_xu=Q_xu,
        Q_uu=0.5 * (Q_uu + Q_uu.T),
    )


def constrained_gain(
    Q: QExpansion,
    cons: InputConstraintSet,
    active_set: Sequence[int],
    sensitivity: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> np.ndarray:
    """
    Feedback gain that keeps the active rows satisfied to first order.

    E stacks the active inequality rows on the equality rows and C is the
    state derivative of their residuals, taken from ``sensitivity`` as
    (C_ineq, C_eq). The gain solves E K = -C and minimizes the action-value
    over the null space Z of E::

        K = P - Z (Z^T Q_uu Z)^-1 Z^T (Q_uu P + Q_ux),   P = -pinv(E) C

    Without a sensitivity C is zero, so feedback produces no motion along
    the active rows. Without active rows K is the unconstrained gain.
    """
    rows = list(active_set)
    E = np.vstack([cons.A[rows], cons.G])
    if E.shape[0] == 0:
        return -linalg.cho_solve(linalg.cho_factor(Q.Q_uu), Q.Q_xu.T)

    if sensitivity is None:
        P = np.zeros_like(Q.Q_xu.T)
    else:
        C_ineq, C_eq = sensitivity
        P = -linalg.pinv(E) @ np.vstack([C_ineq[rows], C_eq])
    Z = linalg.null_space(E)
    if Z.shape[1] == 0:
        return P
    reduced = linalg.cho_factor(Z.T @ Q.Q_uu @ Z)
    return P - Z @ linalg.cho_solve(reduced, Z.T @ (Q.Q_uu @ P + Q.Q_xu.T))


def backward_pass(
    traj: Trajectory, model: DynamicsModel, cost: QuadraticCost, reg: float
) -> BackwardPassResult:
    """
    Compute a control law for the nominal trajectory.

    Args:
        traj (Trajectory): Rollout-consistent nominal trajectory
        model (DynamicsModel): Dynamics used to build the nominal
        cost (QuadraticCost): Tracking cost
        reg (float): Regularization

    Returns:
        BackwardPassResult: Law and the two terms of the improvement model

    Raises:
        BackwardPassError: If a step QP is infeasible or an expansion is not finite
    """
    N, n, m = traj.horizon, model.state_dim, model.input_dim
    _, V_x, V_xx = terminal_expansion(cost, traj.final_state)
    value = ValueExpansion(0.0, V_x, V_xx)

    feedforward = np.zeros((N, m))
    gains = np.zeros((N, m, n))
    d1 = d2 = 0.0

    for k in reversed(range(N)):
        x, u, mode = traj.states[k], traj.inputs[k], traj.modes[k]
        f_x, f_u = linearize(model, x, u, mode)
        Q = q_expansion(value, cost_expansion(cost, x, u), f_x, f_u, reg)
        if not all(np.all(np.isfinite(block)) for block in Q):
            raise BackwardPassError(k, "non-finite expansion")

        cons = model.constraints(x, mode)
        qp = QuadraticProgram(
            H=Q.Q_uu,
            g=Q.q_u,
            A_ineq=cons.A,
            b_ineq=cons.b - cons.A @ u,
            A_eq=cons.G,
            b_eq=cons.h - cons.G @ u,
        )
        try:
            solution = solve_qp(qp, z_start=np.zeros(m))
            K = constrained_gain(
                Q,
                cons,
                solution.active_set,
                linearize_constraints(model, x, u, mode),
            )
        except (QPError, linalg.LinAlgError) as e:
            raise BackwardPassError(k, str(e)) from e
        if solution.status is QPStatus.INFEASIBLE:
            raise BackwardPassError(k, "feedforward QP infeasible")

        k_ff = solution.z
        V_x = Q.q_x + K.T @ Q.Q_uu @ k_ff + K.T @ Q.q_u + Q.Q_xu @ k_ff
        V_xx = Q.Q_xx + K.T @ Q.Q_uu @ K + K.T @ Q.Q_xu.T + Q.Q_xu @ K
        d1 += float(k_ff @ Q.q_u)
        d2 += float(0.5 * k_ff @ Q.Q_uu @ k_ff)
        value = ValueExpansion(d1 + d2, V_x, 0.5 * (V_xx + V_xx.T))

        feedforward[k] = k_ff
        gains[k] = K

    return BackwardPassResult(ControlLaw(feedforward, gains), d1, d2)


def forward_pass(
    model: DynamicsModel, traj: Trajectory, law: ControlLaw, alpha: float
) -> Trajectory:
    """
    Roll out the law with the feedforward scaled by alpha.

    Raises:
        ForwardPassError: If a state diverges or a constraint set is empty
    """
    if len(law) != traj.horizon:
        raise ForwardPassError(
            0, f"law has {len(law)} steps for horizon {traj.horizon}"
        )

    x = traj.initial_state.copy()
    states: List[np.ndarray] = [x]
    inputs: List[np.ndarray] = []
    durations: List[float] = []

    for k, mode in enumerate(traj.modes):
        u = (
            traj.inputs[k]
            + alpha * law.feedforward[k]
            + law.gains[k] @ state_difference(model, x, traj.states[k])
        )
        try:
            u = project_feasible(u, model.constraints(x, mode))
        except (InfeasibleConstraintsError, QPError) as e:
            raise ForwardPassError(k, str(e)) from e

        x = model.step(x, u, mode)
        if not np.all(np.isfinite(x)):
            raise ForwardPassError(k, "non-finite state")
        states.append(x)
        inputs.append(u)
        durations.append(model.step_duration(u))

    return Trajectory(
        states=states,
        inputs=np.reshape(inputs, (traj.horizon, model.input_dim)),
        modes=traj.modes,
        dt=durations,
    )


def _final_law(
    traj: Trajectory, model: DynamicsModel, cost: QuadraticCost, reg: float
) -> ControlLaw:
    try:
        return backward_pass(traj, model, cost, reg).law
    except BackwardPassError as e:
        logger.warning(f"No stabilizing law for the returned trajectory: {e}")
        return ControlLaw.zeros(traj.horizon, model.state_dim, model.input_dim)


def solve(
    model: DynamicsModel,
    cost: QuadraticCost,
    x0: np.ndarray,
    U0: Sequence[np.ndarray],
    modes: Sequence[int],
    config: Optional[DDPConfig] = None,
) -> DDPResult:
    """
    Run input-constrained DDP on a fixed mode schedule.

    The solve is anytime: it always returns the best trajectory found,
    even when the backward pass fails at maximum regularization.

    Args:
        model (DynamicsModel): Dynamics
        cost (QuadraticCost): Tracking cost
        x0 (np.ndarray): Initial state
        U0 (Sequence[np.ndarray]): Initial inputs, feasible per step
        modes (Sequence[int]): Mode of each step
        config (Optional[DDPConfig]): Solver settings

    Returns:
        DDPResult: Best trajectory, its law and solve statistics

    Raises:
        DivergedRolloutError: If the initial rollout diverges
    """
    config = config or DDPConfig()
    start = time.perf_counter()

    traj = rollout(model, x0, U0, modes)
    current = total_cost(traj, cost)
    cost_log = [current]
    records: List[DDPIterationRecord] = []
    reg = config.regularization_init
    converged = False
    law: Optional[ControlLaw] = None
    iteration = 0

    while iteration < config.max_iterations:
        iteration += 1
        try:
            backward = backward_pass(traj, model, cost, reg)
        except BackwardPassError as e:
            logger.debug(f"Iteration {iteration}: {e}; regularization {reg:.1e}")
            if reg >= config.regularization_max:
                break
            reg = min(reg * config.regularization_growth, config.regularization_max)
            continue

        step_size = np.max(np.abs(backward.law.feedforward), initial=0.0)
        if step_size < config.feedforward_tolerance:
            law = backward.law
            converged = True
            break

        accepted = False
        for alpha in config.alphas:
            try:
                candidate = forward_pass(model, traj, backward.law, alpha)
            except ForwardPassError as e:
                logger.debug(f"Iteration {iteration}: alpha {alpha:.4f} rejected: {e}")
                continue
            candidate_cost = total_cost(candidate, cost)
            expected = backward.expected(alpha)
            actual = current - candidate_cost
            accepted = actual >= 0.0 and (
                expected <= 0.0 or actual >= config.accept_ratio * expected
            )
            record = DDPIterationRecord(
                iteration, candidate_cost, alpha, reg, expected, actual, accepted
            )
            records.append(record)
            logger.debug(
                f"iter {iteration:3d} cost {candidate_cost:.6e} alpha {alpha:.4f} "
                f"reg {reg:.1e} expected {expected:.3e} actual {actual:.3e} "
                f"{'accepted' if accepted else 'rejected'}"
            )
            if accepted:
                break

        if not accepted:
            law = None
            if reg >= config.regularization_max:
                break
            reg = min(reg * config.regularization_growth, config.regularization_max)
            continue

        previous = current
        traj, current = candidate, candidate_cost
        cost_log.append(current)
        law = None
        reg = max(reg * config.regularization_shrink, config.regularization_min)
        if previous - current < config.cost_tolerance * max(abs(previous), 1e-12):
            converged = True
            break

    if law is None:
        law = _final_law(traj, model, cost, reg)

    elapsed = time.perf_counter() - start
    logger.debug(
        f"DDP finished: cost {current:.6e} after {iteration} iterations "
        f"(converged={converged}) in {elapsed:.3f}s"
    )
    return DDPResult(
        trajectory=traj,
        law=law,
        cost=current,
        iterations=iteration,
        converged=converged,
        cost_log=tuple(cost_log),
        iterations_log=tuple(records),
        solve_time=elapsed,
    )
