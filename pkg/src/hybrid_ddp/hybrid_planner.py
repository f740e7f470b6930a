"""
Hybrid Planner Module.

This module searches over contact-mode sequences. For every sequence with
at most N_s switches over the enabled modes it places the switches evenly
along the horizon, initializes each segment with static-equilibrium inputs,
prunes sequences whose incoming mode cannot hold the object at a switch,
and runs a capped DDP solve per remaining leaf. The cheapest leaf is then
optimized to convergence.

Leaves are independent, so they may be evaluated in a process pool.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ddp import ControlLaw, DDPConfig, DDPResult, solve
from .errors import HybridDDPError
from .qp_solver import (
    InfeasibleConstraintsError,
    QPStatus,
    QuadraticProgram,
    project_feasible,
    solve_qp,
)
from .trajectory import DynamicsModel, QuadraticCost, Trajectory, total_cost

logger = logging.getLogger(__name__)


class NoPlanError(HybridDDPError):
    """Raised when every leaf of the tree is pruned."""

    def __init__(self, reasons: Sequence[str]):
        self.reasons = list(reasons)
        summary = "; ".join(self.reasons) if self.reasons else "no leaves"
        super().__init__(f"All mode sequences were pruned: {summary}")


@dataclass(frozen=True)
class HybridConfig:
    """
    Tree-search hyper-parameters.

    Attributes:
        n_switches (int): Maximum number of mode switches N_s
        enabled_modes (Tuple[int, ...]): Modes the tree may use
        horizon (int): Steps N
        tree_iterations (int): DDP iteration cap per leaf N_i
        final_iterations (int): DDP iteration cap for the winning leaf
        workers (int): Processes used for leaf solves
        ddp (DDPConfig): Remaining solver settings
    """

    n_switches: int = 1
    enabled_modes: Tuple[int, ...] = (0,)
    horizon: int = 24
    tree_iterations: int = 10
    final_iterations: int = 100
    workers: int = 1
    ddp: DDPConfig = field(default_factory=DDPConfig)

    def __post_init__(self):
        """Validate hyper-parameters after initialization."""
        modes = tuple(int(mode) for mode in self.enabled_modes)
        object.__setattr__(self, "enabled_modes", modes)
        if self.n_switches < 0:
            raise ValueError("n_switches must be non-negative")
        if not modes:
            raise ValueError("at least one mode must be enabled")
        if len(set(modes)) != len(modes):
            raise ValueError("enabled_modes contains duplicates")
        if self.horizon < self.n_switches + 1:
            raise ValueError("horizon must be at least n_switches + 1")
        if self.tree_iterations < 0 or self.final_iterations < 0:
            raise ValueError("iteration caps must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class ModeSequence:
    """
    Ordered contact modes with the steps at which they switch.

    An unplaced sequence has no switch steps yet; place() fixes them for a
    horizon.
    """

    modes: Tuple[int, ...]
    switch_steps: Tuple[int, ...] = ()

    def __post_init__(self):
        """Validate the sequence after initialization."""
        modes = tuple(int(mode) for mode in self.modes)
        steps = tuple(int(step) for step in self.switch_steps)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "switch_steps", steps)
        if not modes:
            raise ValueError("a mode sequence needs at least one mode")
        if any(a == b for a, b in zip(modes, modes[1:])):
            raise ValueError(f"consecutive modes repeat in {modes}")
        if steps:
            if len(steps) != len(modes) - 1:
                raise ValueError("need exactly one switch step per switch")
            if any(b <= a for a, b in zip(steps, steps[1:])) or steps[0] <= 0:
                raise ValueError(
                    f"switch steps must be positive and increasing: {steps}"
                )

    @property
    def n_switches(self) -> int:
        return len(self.modes) - 1

    @property
    def placed(self) -> bool:
        return self.n_switches == 0 or bool(self.switch_steps)

    @property
    def label(self) -> str:
        return ">".join(str(mode) for mode in self.modes)

    def place(self, horizon: int) -> "ModeSequence":
        return ModeSequence(self.modes, tuple(switch_times(horizon, self.n_switches)))

    def segments(self, horizon: int) -> List[Tuple[int, int, int]]:
        """Return (mode, start, end) for each segment."""
        if not self.placed:
            raise ValueError("sequence has no switch steps; call place() first")
        if self.switch_steps and self.switch_steps[-1] >= horizon:
            last = self.switch_steps[-1]
            raise ValueError(f"switch step {last} outside horizon {horizon}")
        bounds = (0,) + self.switch_steps + (horizon,)
        return [(mode, bounds[i], bounds[i + 1]) for i, mode in enumerate(self.modes)]

    def schedule(self, horizon: int) -> Tuple[int, ...]:
        """Mode of every step."""
        return tuple(
            mode
            for mode, start, end in self.segments(horizon)
            for _ in range(start, end)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"modes": list(self.modes), "switch_steps": list(self.switch_steps)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModeSequence":
        return cls(tuple(data["modes"]), tuple(data.get("switch_steps", ())))


@dataclass(frozen=True)
class LeafCandidate:
    """
    One optimized (or pruned) leaf of the tree.

    Attributes:
        sequence (ModeSequence): Placed mode sequence
        trajectory (Optional[Trajectory]): Tree-phase trajectory, None when pruned
        approx_cost (float): Total cost of the trajectory, inf when pruned
        pruned (bool): Whether the leaf was discarded
        reason (str): Why it was pruned
        solve_time (float): Seconds spent on the leaf
    """

    sequence: ModeSequence
    trajectory: Optional[Trajectory]
    approx_cost: float
    pruned: bool = False
    reason: str = ""
    solve_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sequence": self.sequence.to_dict(),
            "approx_cost": None if self.pruned else self.approx_cost,
            "pruned": self.pruned,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class PlanningTime:
    """Wall-clock seconds spent growing the tree and on the final solve."""

    tree: float
    final: float

    @property
    def total(self) -> float:
        return self.tree + self.final


@dataclass(frozen=True)
class HybridPlan:
    """
    Result of the tree search.

    Attributes:
        best (ModeSequence): Winning sequence
        trajectory (Trajectory): Optimized trajectory
        law (ControlLaw): Stabilizing law for the trajectory
        leaf_table (Tuple[LeafCandidate, ...]): Every leaf in generation order
        planning_time (PlanningTime): Phase timings, left out of to_dict
        goal (np.ndarray): Goal state of the cost
        cost (float): Cost of the optimized trajectory
        model (str): Name of the model that produced the plan
    """

    best: ModeSequence
    trajectory: Trajectory
    law: ControlLaw
    leaf_table: Tuple[LeafCandidate, ...]
    planning_time: PlanningTime
    goal: np.ndarray
    cost: float
    model: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "best": self.best.to_dict(),
            "cost": self.cost,
            "goal": np.asarray(self.goal).tolist(),
            "trajectory": self.trajectory.to_dict(),
            "law": self.law.to_dict(),
            "leaf_table": [leaf.to_dict() for leaf in self.leaf_table],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HybridPlan":
        """Rebuild a plan from to_dict output; leaf trajectories are not stored."""
        leaves = tuple(
            LeafCandidate(
                sequence=ModeSequence.from_dict(leaf["sequence"]),
                trajectory=None,
                approx_cost=math.inf if leaf["pruned"] else float(leaf["approx_cost"]),
                pruned=bool(leaf["pruned"]),
                reason=leaf.get("reason", ""),
            )
            for leaf in data.get("leaf_table", [])
        )
        timing = data.get("planning_time", {})
        return cls(
            best=ModeSequence.from_dict(data["best"]),
            trajectory=Trajectory.from_dict(data["trajectory"]),
            law=ControlLaw.from_dict(data["law"]),
            leaf_table=leaves,
            planning_time=PlanningTime(
                timing.get("tree", 0.0), timing.get("final", 0.0)
            ),
            goal=np.asarray(data["goal"], dtype=float),
            cost=float(data["cost"]),
            model=data.get("model", ""),
        )


def switch_times(horizon: int, n_switches: int) -> List[int]:
    """
    Place n_switches switch steps evenly inside (0, horizon).

    Halves round up, so the placement does not depend on banker's rounding.
    """
    if horizon < n_switches + 1:
        raise ValueError("horizon must be at least n_switches + 1")
    return [
        int(math.floor(j * horizon / (n_switches + 1) + 0.5))
        for j in range(1, n_switches + 1)
    ]


def enumerate_sequences(
    enabled_modes: Sequence[int], n_switches: int, horizon: Optional[int] = None
) -> List[ModeSequence]:
    """
    List every sequence of n_switches + 1 enabled modes without consecutive repeats.

    Sequences come in lexicographic order; with a single mode there is one
    sequence and no switch. When horizon is given the sequences are placed.
    """
    modes = sorted(set(int(mode) for mode in enabled_modes))
    if len(modes) == 1:
        n_switches = 0

    sequences = [
        ModeSequence(combo)
        for combo in itertools.product(modes, repeat=n_switches + 1)
        if all(a != b for a, b in zip(combo, combo[1:]))
    ]
    if horizon is not None:
        sequences = [sequence.place(horizon) for sequence in sequences]
    return sequences


def static_equilibrium_input(
    model: DynamicsModel, x: np.ndarray, mode: int
) -> Optional[np.ndarray]:
    """
    Find the input closest to the model's reference that holds x at rest in mode.

    Returns:
        Optional[np.ndarray]: The input, or None when the mode cannot hold x
    """
    cons = model.equilibrium_constraints(x, mode)
    u_ref = model.reference_input(mode)
    qp = QuadraticProgram(
        H=2.0 * np.eye(model.input_dim),
        g=-2.0 * u_ref,
        A_ineq=cons.A,
        b_ineq=cons.b,
        A_eq=cons.G,
        b_eq=cons.h,
    )
    solution = solve_qp(qp)
    if solution.status is not QPStatus.OPTIMAL:
        return None
    return solution.z


def _first_unbalanced_switch(
    model: DynamicsModel, sequence: ModeSequence, switch_states: Sequence[np.ndarray]
) -> Optional[int]:
    for index, (mode, x) in enumerate(zip(sequence.modes[1:], switch_states)):
        if static_equilibrium_input(model, x, mode) is None:
            return index
    return None


def prune(
    model: DynamicsModel, sequence: ModeSequence, switch_states: Sequence[np.ndarray]
) -> bool:
    """True iff some incoming mode cannot hold the object at its switch state."""
    return _first_unbalanced_switch(model, sequence, switch_states) is not None


@dataclass(frozen=True)
class LeafInitialization:
    inputs: np.ndarray
    switch_states: Tuple[np.ndarray, ...]
    reason: str = ""


def initialize_leaf(
    model: DynamicsModel, x0: np.ndarray, sequence: ModeSequence, horizon: int
) -> LeafInitialization:
    """
    Build equilibrium inputs per segment by rolling out each segment in turn.

    The first segment falls back to the feasible input nearest the reference
    when its mode cannot hold x0; a later segment that cannot hold its switch
    state stops the initialization with a prune reason.
    """
    x = np.asarray(x0, dtype=float)
    inputs: List[np.ndarray] = []
    switch_states: List[np.ndarray] = []

    for index, (mode, start, end) in enumerate(sequence.segments(horizon)):
        if index > 0:
            switch_states.append(x)
        u = static_equilibrium_input(model, x, mode)
        if u is None:
            if index > 0:
                return LeafInitialization(
                    np.asarray(inputs),
                    tuple(switch_states),
                    f"{sequence.label}: mode {mode} cannot hold the object "
                    f"at step {start}",
                )
            try:
                u = project_feasible(
                    model.reference_input(mode), model.constraints(x, mode)
                )
            except InfeasibleConstraintsError:
                return LeafInitialization(
                    np.asarray(inputs),
                    (),
                    f"{sequence.label}: mode {mode} has no feasible input at the start",
                )
        for _ in range(start, end):
            inputs.append(u)
            x = model.step(x, u, mode)

    return LeafInitialization(np.asarray(inputs), tuple(switch_states))


def evaluate_leaf(
    model: DynamicsModel,
    cost: QuadraticCost,
    x0: np.ndarray,
    sequence: ModeSequence,
    horizon: int,
    ddp_config: DDPConfig,
) -> LeafCandidate:
    """Initialize, prune and run the capped DDP solve for one leaf."""
    start = time.perf_counter()
    init = initialize_leaf(model, x0, sequence, horizon)
    if init.reason:
        logger.debug(f"Pruned {init.reason}")
        return LeafCandidate(
            sequence, None, math.inf, True, init.reason, time.perf_counter() - start
        )

    try:
        result = solve(
            model, cost, x0, init.inputs, sequence.schedule(horizon), ddp_config
        )
    except HybridDDPError as e:
        reason = f"{sequence.label}: {e}"
        logger.debug(f"Pruned {reason}")
        elapsed = time.perf_counter() - start
        return LeafCandidate(sequence, None, math.inf, True, reason, elapsed)

    logger.debug(f"Leaf {sequence.label}: cost {result.cost:.6e}")
    return LeafCandidate(
        sequence=sequence,
        trajectory=result.trajectory,
        approx_cost=total_cost(result.trajectory, cost),
        solve_time=time.perf_counter() - start,
    )


def _evaluate_leaf_job(args: Tuple) -> LeafCandidate:
    return evaluate_leaf(*args)


def tree_sequences(config: HybridConfig) -> List[ModeSequence]:
    """All placed sequences with 0..N_s switches, in generation order."""
    sequences: List[ModeSequence] = []
    max_switches = config.n_switches if len(config.enabled_modes) > 1 else 0
    for n in range(max_switches + 1):
        sequences.extend(enumerate_sequences(config.enabled_modes, n, config.horizon))
    return sequences


def plan(
    model: DynamicsModel,
    cost: QuadraticCost,
    x0: np.ndarray,
    config: HybridConfig,
) -> HybridPlan:
    """
    Run the tree search and the final solve.

    Args:
        model (DynamicsModel): Hybrid dynamics
        cost (QuadraticCost): Tracking cost
        x0 (np.ndarray): Initial state
        config (HybridConfig): Tree-search settings

    Returns:
        HybridPlan: Winning sequence, optimized trajectory, law and leaf table

    Raises:
        NoPlanError: If every leaf is pruned
    """
    for mode in config.enabled_modes:
        model.validate_mode(mode)
    x0 = np.asarray(x0, dtype=float)

    tree_start = time.perf_counter()
    sequences = tree_sequences(config)
    tree_config = replace(config.ddp, max_iterations=config.tree_iterations)
    jobs = [
        (model, cost, x0, sequence, config.horizon, tree_config)
        for sequence in sequences
    ]
    logger.info(
        f"Growing tree: {len(jobs)} leaves over modes {config.enabled_modes} "
        f"with up to {config.n_switches} switches"
    )

    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            leaves = list(executor.map(_evaluate_leaf_job, jobs))
    else:
        leaves = [_evaluate_leaf_job(job) for job in jobs]
    tree_time = time.perf_counter() - tree_start

    candidates = [leaf for leaf in leaves if not leaf.pruned]
    if not candidates:
        raise NoPlanError([leaf.reason for leaf in leaves])
    winner = min(candidates, key=lambda leaf: (leaf.approx_cost, leaf.sequence.modes))
    logger.info(
        f"Best leaf {winner.sequence.label} with cost {winner.approx_cost:.6e} "
        f"({len(leaves) - len(candidates)} pruned, {tree_time:.3f}s)"
    )

    final_start = time.perf_counter()
    final: DDPResult = solve(
        model,
        cost,
        x0,
        winner.trajectory.inputs,
        winner.trajectory.modes,
        replace(config.ddp, max_iterations=config.final_iterations),
    )
    final_time = time.perf_counter() - final_start
    logger.info(f"Final solve: cost {final.cost:.6e} in {final_time:.3f}s")

    return HybridPlan(
        best=winner.sequence,
        trajectory=final.trajectory,
        law=final.law,
        leaf_table=tuple(leaves),
        planning_time=PlanningTime(tree=tree_time, final=final_time),
        goal=cost.goal,
        cost=final.cost,
        model=model.name,
    )
