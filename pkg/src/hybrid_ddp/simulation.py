"""
Simulation Harness Module.

This module executes hybrid plans in closed loop under injected noise,
scores terminal states against success thresholds, converts pushing plans
into pusher position commands, and runs ablation sweeps over planner
hyper-parameters, contact combinations, initial conditions and object
variants.
"""

import csv
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import HybridDDPError
from .hybrid_planner import HybridConfig, HybridPlan, plan
from .primitives import rotation, wrap_angle
from .pushing import (
    PushingParams,
    contact_frame,
    contact_jacobian,
    contact_point,
    limit_surface_matrix,
)
from .qp_solver import InfeasibleConstraintsError, QPError, project_feasible
from .trajectory import DynamicsModel, QuadraticCost, state_difference

logger = logging.getLogger(__name__)


class SimulationError(HybridDDPError):
    """Raised when a plan cannot be executed on the given model."""

    pass


@dataclass(frozen=True)
class SuccessCriteria:
    """
    Per-coordinate absolute error thresholds on the terminal state.

    Attributes:
        thresholds (Tuple[float, ...]): Threshold per state coordinate
        angle_indices (Tuple[int, ...]): Coordinates compared modulo 2 pi
    """

    thresholds: Tuple[float, ...]
    angle_indices: Tuple[int, ...] = ()

    def __post_init__(self):
        """Validate thresholds after initialization."""
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "angle_indices", tuple(self.angle_indices))
        if not self.thresholds or any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive")

    @classmethod
    def pushing_default(cls) -> "SuccessCriteria":
        """5 cm, 5 cm, 5 degrees."""
        return cls((0.05, 0.05, np.deg2rad(5.0)), (2,))

    @classmethod
    def pivoting_default(cls) -> "SuccessCriteria":
        """10 degrees, 10 degrees per second."""
        return cls((np.deg2rad(10.0), np.deg2rad(10.0)), (0,))


@dataclass(frozen=True)
class NoiseModel:
    """
    Additive Gaussian disturbances for closed-loop execution.

    Attributes:
        state_std (Tuple[float, ...]): Per-step state noise standard deviations
        input_std (Tuple[float, ...]): Input execution noise standard deviations
        seed (int): Random seed
    """

    state_std: Tuple[float, ...]
    input_std: Tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        """Validate noise levels after initialization."""
        object.__setattr__(self, "state_std", tuple(float(s) for s in self.state_std))
        object.__setattr__(self, "input_std", tuple(float(s) for s in self.input_std))
        if any(s < 0 for s in self.state_std + self.input_std):
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def zero(cls, state_dim: int, input_dim: int) -> "NoiseModel":
        return cls((0.0,) * state_dim, (0.0,) * input_dim)

    def with_seed(self, seed: int) -> "NoiseModel":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SimResult:
    """
    Executed trajectory and its score.

    States are the executed (noisy) states, so they do not satisfy the
    rollout invariant of Trajectory.

    Attributes:
        states (np.ndarray): Executed states
        inputs (np.ndarray): Applied inputs after feedback and projection
        modes (Tuple[int, ...]): Executed mode schedule
        terminal_error (np.ndarray): Wrapped final state minus goal
        success (bool): Whether all errors are under threshold
        feedback (bool): Whether the feedback law was applied
        divergence_step (Optional[int]): Step at which execution diverged
        seed (int): Noise seed
    """

    states: np.ndarray
    inputs: np.ndarray
    modes: Tuple[int, ...]
    terminal_error: np.ndarray
    success: bool
    feedback: bool = True
    divergence_step: Optional[int] = None
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "success": self.success,
            "feedback": self.feedback,
            "seed": self.seed,
            "divergence_step": self.divergence_step,
            "terminal_error": np.asarray(self.terminal_error).tolist(),
            "states": np.asarray(self.states).tolist(),
            "inputs": np.asarray(self.inputs).tolist(),
            "modes": list(self.modes),
        }


def terminal_error(
    final: np.ndarray, goal: np.ndarray, angle_indices: Sequence[int] = ()
) -> np.ndarray:
    """Final state minus goal with angular coordinates wrapped to (-pi, pi]."""
    error = np.asarray(final, dtype=float) - np.asarray(goal, dtype=float)
    for i in angle_indices:
        error[i] = wrap_angle(error[i])
    return error


def success(final: np.ndarray, goal: np.ndarray, criteria: SuccessCriteria) -> bool:
    """
    True iff every wrapped error coordinate is strictly under its threshold.

    Raises:
        ValueError: If dimensions disagree
    """
    error = terminal_error(final, goal, criteria.angle_indices)
    if error.shape[0] != len(criteria.thresholds):
        raise ValueError(
            f"State has {error.shape[0]} coordinates but "
            f"{len(criteria.thresholds)} thresholds"
        )
    return bool(np.all(np.abs(error) < np.asarray(criteria.thresholds)))


def simulate_closed_loop(
    model: DynamicsModel,
    plan_: HybridPlan,
    noise: NoiseModel,
    criteria: SuccessCriteria,
    feedback: bool = True,
) -> SimResult:
    """
    Execute a plan with the stabilizing law under injected noise.

    At each step the applied input is the nominal input plus K dx (when
    feedback is on) plus input noise, projected onto the step's constraints.
    State noise is added after the model step. Both noise streams are drawn
    every step so runs with and without feedback see the same disturbances.

    Args:
        model (DynamicsModel): Model used to execute the plan
        plan_ (HybridPlan): Plan to execute
        noise (NoiseModel): Disturbances and seed
        criteria (SuccessCriteria): Terminal thresholds
        feedback (bool): Apply the feedback gains

    Returns:
        SimResult: Executed trajectory and score

    Raises:
        SimulationError: If the plan does not match the model
    """
    nominal = plan_.trajectory
    N, n, m = nominal.horizon, model.state_dim, model.input_dim
    if nominal.states.shape[1] != n or (N and nominal.inputs.shape[1] != m):
        raise SimulationError(f"Plan dimensions do not match model '{model.name}'")
    if len(plan_.law) != N:
        raise SimulationError(f"Law has {len(plan_.law)} steps for horizon {N}")
    if len(noise.state_std) != n or len(noise.input_std) != m:
        raise SimulationError("Noise dimensions do not match the model")

    rng = np.random.default_rng(noise.seed)
    state_std = np.asarray(noise.state_std)
    input_std = np.asarray(noise.input_std)

    x = nominal.initial_state.copy()
    states = [x]
    inputs: List[np.ndarray] = []
    divergence_step = None

    for k, mode in enumerate(nominal.modes):
        input_noise = rng.normal(0.0, 1.0, m) * input_std
        state_noise = rng.normal(0.0, 1.0, n) * state_std

        u = nominal.inputs[k] + input_noise
        if feedback:
            dx = state_difference(model, x, nominal.states[k])
            u = u + plan_.law.gains[k] @ dx
        try:
            u = project_feasible(u, model.constraints(x, mode))
        except (InfeasibleConstraintsError, QPError):
            divergence_step = k
            break

        x = model.step(x, u, mode) + state_noise
        if not np.all(np.isfinite(x)):
            divergence_step = k
            break
        states.append(x)
        inputs.append(u)

    error = terminal_error(states[-1], plan_.goal, criteria.angle_indices)
    ok = divergence_step is None and success(states[-1], plan_.goal, criteria)
    return SimResult(
        states=np.asarray(states),
        inputs=np.asarray(inputs).reshape(len(inputs), m),
        modes=tuple(nominal.modes[: len(inputs)]),
        terminal_error=error,
        success=ok,
        feedback=feedback,
        divergence_step=divergence_step,
        seed=noise.seed,
    )


@dataclass(frozen=True)
class FeedbackStudy:
    """Terminal-error statistics of open-loop and closed-loop runs on shared seeds."""

    open_loop: Tuple[SimResult, ...]
    closed_loop: Tuple[SimResult, ...]

    @staticmethod
    def _errors(runs: Sequence[SimResult]) -> np.ndarray:
        return np.asarray([run.terminal_error for run in runs])

    @property
    def open_loop_mean(self) -> np.ndarray:
        return np.mean(np.abs(self._errors(self.open_loop)), axis=0)

    @property
    def closed_loop_mean(self) -> np.ndarray:
        return np.mean(np.abs(self._errors(self.closed_loop)), axis=0)

    @property
    def open_loop_sd(self) -> np.ndarray:
        return np.std(self._errors(self.open_loop), axis=0, ddof=1)

    @property
    def closed_loop_sd(self) -> np.ndarray:
        return np.std(self._errors(self.closed_loop), axis=0, ddof=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "open_loop": [run.to_dict() for run in self.open_loop],
            "closed_loop": [run.to_dict() for run in self.closed_loop],
            "open_loop_sd": self.open_loop_sd.tolist(),
            "closed_loop_sd": self.closed_loop_sd.tolist(),
        }


def feedback_study(
    model: DynamicsModel,
    plan_: HybridPlan,
    noise: NoiseModel,
    criteria: SuccessCriteria,
    runs: int = 5,
) -> FeedbackStudy:
    """Run the plan with feedback off and on for runs seeds starting at noise.seed."""
    if runs < 2:
        raise ValueError("a feedback study needs at least two runs")
    seeds = [noise.seed + i for i in range(runs)]
    open_loop = tuple(
        simulate_closed_loop(model, plan_, noise.with_seed(s), criteria, feedback=False)
        for s in seeds
    )
    closed_loop = tuple(
        simulate_closed_loop(model, plan_, noise.with_seed(s), criteria, feedback=True)
        for s in seeds
    )
    return FeedbackStudy(open_loop, closed_loop)


@dataclass(frozen=True)
class PusherPathPoint:
    step: int
    segment: int
    mode: int
    position: np.ndarray


def pusher_positions(plan_: HybridPlan, params: PushingParams) -> List[PusherPathPoint]:
    """
    Convert a pushing plan into pusher position commands.

    Each segment starts at the active contact point of the object pose and
    integrates p_{k+1} = p_k + dt_k R J L J^T f_k. A new segment (a contact
    switch) restarts the pusher at the new contact point, so the output has
    one point per step plus one extra point per segment.
    """
    traj = plan_.trajectory
    L = limit_surface_matrix(params)
    points: List[PusherPathPoint] = []
    segment = -1
    position = None

    for k, mode in enumerate(traj.modes):
        theta = traj.states[k][2]
        if k == 0 or mode != traj.modes[k - 1]:
            segment += 1
            offset = rotation(theta) @ contact_point(mode, params)
            position = traj.states[k][:2] + offset
            points.append(PusherPathPoint(k, segment, mode, position))

        J = contact_jacobian(mode, params)
        force = contact_frame(mode) @ traj.inputs[k][:2]
        position = position + traj.dt[k] * rotation(theta) @ J @ L @ J.T @ force
        points.append(PusherPathPoint(k + 1, segment, mode, position))

    return points


def write_pusher_path_csv(
    points: Sequence[PusherPathPoint], path: Union[str, Path]
) -> Path:
    """Write step, segment, mode, x, y rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "segment", "mode", "x", "y"])
        for point in points:
            writer.writerow(
                [
                    point.step,
                    point.segment,
                    point.mode,
                    repr(float(point.position[0])),
                    repr(float(point.position[1])),
                ]
            )
    return path


@dataclass(frozen=True)
class AblationPoint:
    """One grid point of an ablation sweep."""

    contact_count: int
    n_switches: int
    tree_iterations: int
    horizon: int


@dataclass(frozen=True)
class AblationRecord:
    """
    Aggregated outcome of one grid point.

    Attributes:
        point (AblationPoint): Grid coordinates
        success_rate (float): Fraction of successful plans
        n (int): Number of plans
        tree_time_mean (float): Mean tree-phase seconds
        tree_time_sd (float): Standard deviation of tree-phase seconds
        final_time_mean (float): Mean final-solve seconds
        final_time_sd (float): Standard deviation of final-solve seconds
    """

    point: AblationPoint
    success_rate: float
    n: int
    tree_time_mean: float
    tree_time_sd: float
    final_time_mean: float
    final_time_sd: float


@dataclass(frozen=True)
class AblationOutcome:
    success: bool
    tree_time: float
    final_time: float


def _run_ablation_job(job: Tuple) -> AblationOutcome:
    model, cost, x0, hybrid_config, criteria = job
    start = time.perf_counter()
    try:
        result = plan(model, cost, x0, hybrid_config)
    except HybridDDPError as e:
        logger.debug(f"Plan failed for modes {hybrid_config.enabled_modes}: {e}")
        return AblationOutcome(False, time.perf_counter() - start, 0.0)
    return AblationOutcome(
        success(result.trajectory.final_state, cost.goal, criteria),
        result.planning_time.tree,
        result.planning_time.final,
    )


def ablation_sweep(
    models: Sequence[DynamicsModel],
    cost: QuadraticCost,
    points: Sequence[AblationPoint],
    initial_conditions: Sequence[np.ndarray],
    criteria: SuccessCriteria,
    base_config: Optional[HybridConfig] = None,
    workers: int = 1,
) -> List[AblationRecord]:
    """
    Plan over every combination of grid point, contact set, model variant and start.

    For a grid point with contact count c, every c-element subset of the
    model's modes is tried. Failed plans count as unsuccessful.

    Args:
        models (Sequence[DynamicsModel]): Model variants (same mode set)
        cost (QuadraticCost): Tracking cost
        points (Sequence[AblationPoint]): Grid points
        initial_conditions (Sequence[np.ndarray]): Start states
        criteria (SuccessCriteria): Terminal thresholds
        base_config (Optional[HybridConfig]): Remaining planner settings
        workers (int): Processes used across plans

    Returns:
        List[AblationRecord]: One record per grid point, in grid order
    """
    if not points:
        raise ValueError("ablation grid is empty")
    if not models or not initial_conditions:
        raise ValueError("ablation needs at least one model and one initial condition")
    base_config = base_config or HybridConfig()
    modes = models[0].modes

    jobs: List[Tuple] = []
    owners: List[int] = []
    for index, point in enumerate(points):
        if not 1 <= point.contact_count <= len(modes):
            raise ValueError(
                f"contact_count {point.contact_count} outside 1..{len(modes)}"
            )
        for combo in itertools.combinations(modes, point.contact_count):
            config = replace(
                base_config,
                enabled_modes=combo,
                n_switches=point.n_switches,
                tree_iterations=point.tree_iterations,
                horizon=point.horizon,
                workers=1,
            )
            for model in models:
                for x0 in initial_conditions:
                    x0 = np.asarray(x0, dtype=float)
                    jobs.append((model, cost, x0, config, criteria))
                    owners.append(index)

    logger.info(f"Ablation sweep: {len(points)} grid points, {len(jobs)} plans")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(_run_ablation_job, jobs))
    else:
        outcomes = [_run_ablation_job(job) for job in jobs]

    records = []
    for index, point in enumerate(points):
        cell = [o for o, owner in zip(outcomes, owners) if owner == index]
        tree = np.array([o.tree_time for o in cell])
        final = np.array([o.final_time for o in cell])
        records.append(
            AblationRecord(
                point=point,
                success_rate=float(np.mean([o.success for o in cell])),
                n=len(cell),
                tree_time_mean=float(np.mean(tree)),
                tree_time_sd=float(np.std(tree)),
                final_time_mean=float(np.mean(final)),
                final_time_sd=float(np.std(final)),
            )
        )
        logger.info(
            f"{point}: success rate {records[-1].success_rate:.3f} "
            f"over {len(cell)} plans"
        )
    return records


ABLATION_COLUMNS = [
    "contact_count",
    "n_switches",
    "tree_iterations",
    "horizon",
    "success_rate",
    "plan_time_tree_mean",
    "plan_time_tree_sd",
    "plan_time_final_mean",
    "plan_time_final_sd",
    "n",
]


def write_ablation_csv(
    records: Sequence[AblationRecord], path: Union[str, Path]
) -> Path:
    """Write one row per record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ABLATION_COLUMNS)
        for record in records:
            p = record.point
            writer.writerow(
                [
                    p.contact_count,
                    p.n_switches,
                    p.tree_iterations,
                    p.horizon,
                    repr(record.success_rate),
                    f"{record.tree_time_mean:.6f}",
                    f"{record.tree_time_sd:.6f}",
                    f"{record.final_time_mean:.6f}",
                    f"{record.final_time_sd:.6f}",
                    record.n,
                ]
            )
    return path
