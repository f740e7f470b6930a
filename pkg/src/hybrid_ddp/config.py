"""
Configuration Module.

This module provides configuration management for hybrid_ddp. Runtime
settings (log level, worker count, output directory, seed override) come
from environment variables, optionally loaded from a .env file. Experiments
are described by JSON documents that are parsed into validated dataclasses;
the documents for the shipped experiments live in presets/.

Conventions in experiment documents: lengths in meters, forces in newtons,
times in seconds, and rotational state coordinates (angles and angular
rates) in degrees. Rotational coordinates are converted to radians when the
document is turned into model-level objects.
"""

import itertools
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from dotenv import load_dotenv

from .ddp import DDPConfig
from .errors import HybridDDPError
from .hybrid_planner import HybridConfig
from .pivoting import PivotingParams, PlanarPivotingModel
from .pushing import PlanarPushingModel, PushingParams
from .simulation import AblationPoint, NoiseModel, SuccessCriteria
from .trajectory import DynamicsModel, QuadraticCost

# Load environment variables from .env file if it exists
load_dotenv()

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
MODEL_KINDS = ("pushing", "pivoting")

# Rotational state coordinates per model, given in degrees in documents.
ROTATIONAL_INDICES = {"pushing": (2,), "pivoting": (0, 1)}

# State noise used when a document has no noise.state_std, in document units
DEFAULT_STATE_NOISE = {"pushing": [0.001, 0.001, 0.5], "pivoting": [0.2, 1.0]}


class ConfigurationError(HybridDDPError):
    """Custom exception for configuration related errors."""

    pass


def _check_int(name: str, value: Any, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{name}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name}: must be >= {minimum}")


def _check_numbers(name: str, values: Any, length: Optional[int] = None) -> None:
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ConfigurationError(f"{name}: expected a list of numbers")
    if length is not None and len(values) != length:
        raise ConfigurationError(f"{name}: expected {length} values, got {len(values)}")


def _check_int_list(name: str, values: Any, minimum: int) -> None:
    if not isinstance(values, list) or not values:
        raise ConfigurationError(f"{name}: expected a non-empty list of integers")
    for value in values:
        _check_int(name, value, minimum)


@dataclass
class RuntimeSettings:
    """
    Process-level settings read from the environment.

    Attributes:
        log_level (str): Logging level
        workers (int): Worker processes for leaf solves and sweeps
        output_dir (str): Directory for result files
        seed (Optional[int]): Override of the experiment seed
    """

    log_level: str = "INFO"
    workers: int = 1
    output_dir: str = "results"
    seed: Optional[int] = None

    def __post_init__(self):
        """Validate runtime settings after initialization."""
        if self.workers < 1:
            raise ConfigurationError("HYBRID_DDP_WORKERS must be at least 1")


@dataclass
class ModelConfig:
    """
    Model selector and physical parameters.

    Attributes:
        kind (str): "pushing" or "pivoting"
        params (Dict[str, Any]): Keyword arguments of PushingParams or PivotingParams
    """

    kind: str = "pushing"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        """Validate the model section after initialization."""
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"kind: must be one of {', '.join(MODEL_KINDS)}")
        if not isinstance(self.params, dict):
            raise ConfigurationError("params: expected an object")
        self.build_params()

    def build_params(self) -> Union[PushingParams, PivotingParams]:
        cls = PushingParams if self.kind == "pushing" else PivotingParams
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(self.params) - known)
        if unknown:
            raise ConfigurationError(f"params.{unknown[0]}: unknown parameter")
        params = dict(self.params)
        if "dt_bounds" in params:
            params["dt_bounds"] = tuple(params["dt_bounds"])
        try:
            return cls(**params)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"params: {e}") from e

    def build_model(self, aspect_ratio: Optional[float] = None) -> DynamicsModel:
        """Instantiate the model, optionally with a pivoting aspect-ratio variant."""
        params = self.build_params()
        if self.kind == "pushing":
            return PlanarPushingModel(params)
        if aspect_ratio is not None:
            params = params.with_aspect_ratio(aspect_ratio)
        return PlanarPivotingModel(params)


@dataclass
class HybridSettings:
    """Tree-search hyper-parameters N_s, enabled modes, N, N_i and the final cap."""

    n_switches: int = 1
    enabled_modes: List[int] = field(default_factory=lambda: [0])
    horizon: int = 24
    tree_iterations: int = 10
    final_iterations: int = 100

    def __post_init__(self):
        """Validate tree-search settings after initialization."""
        _check_int("n_switches", self.n_switches, 0)
        _check_int_list("enabled_modes", self.enabled_modes, 0)
        _check_int("horizon", self.horizon, 1)
        _check_int("tree_iterations", self.tree_iterations, 0)
        _check_int("final_iterations", self.final_iterations, 0)
        if self.horizon < self.n_switches + 1:
            raise ConfigurationError("horizon: must be >= n_switches + 1")
        if len(set(self.enabled_modes)) != len(self.enabled_modes):
            raise ConfigurationError("enabled_modes: contains duplicates")


@dataclass
class DDPSettings:
    """Solver tolerances and schedules; see DDPConfig."""

    cost_tolerance: float = 1e-6
    feedforward_tolerance: float = 1e-6
    regularization_init: float = 1e-6
    line_search_steps: int = 11
    accept_ratio: float = 1e-4

    def __post_init__(self):
        """Validate solver settings after initialization."""
        _check_int("line_search_steps", self.line_search_steps, 1)
        for name in (
            "cost_tolerance",
            "feedforward_tolerance",
            "regularization_init",
            "accept_ratio",
        ):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigurationError(f"{name}: must be a positive number")

    def build(self, max_iterations: int = 100) -> DDPConfig:
        return DDPConfig(
            max_iterations=max_iterations,
            cost_tolerance=self.cost_tolerance,
            feedforward_tolerance=self.feedforward_tolerance,
            regularization_init=self.regularization_init,
            line_search_steps=self.line_search_steps,
            accept_ratio=self.accept_ratio,
        )


@dataclass
class CostSettings:
    """
    Diagonal cost weights and goal state.

    Attributes:
        Q (List[float]): Running state weight diagonal
        R (List[float]): Input weight diagonal
        Q_N (List[float]): Terminal state weight diagonal
        goal (List[float]): Goal state (rotational coordinates in degrees)
    """

    Q: List[float] = field(default_factory=lambda: [10.0, 10.0, 1.0])
    R: List[float] = field(default_factory=lambda: [0.1, 0.1])
    Q_N: List[float] = field(default_factory=lambda: [2000.0, 2000.0, 500.0])
    goal: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self):
        """Validate cost weights after initialization."""
        for name in ("Q", "R", "Q_N", "goal"):
            _check_numbers(name, getattr(self, name))
        for name in ("Q", "R", "Q_N"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ConfigurationError(f"{name}: weights must be positive")
        if not len(self.Q) == len(self.Q_N) == len(self.goal):
            raise ConfigurationError("Q: Q, Q_N and goal must have the same length")


@dataclass
class InitialConditionSpec:
    """
    Start states as an explicit list, a grid, or both.

    Attributes:
        states (List[List[float]]): Explicit start states
        grid (List[List[float]]): Values per state coordinate; their product is added
    """

    states: List[List[float]] = field(default_factory=list)
    grid: List[List[float]] = field(default_factory=list)

    def __post_init__(self):
        """Validate initial conditions after initialization."""
        if not isinstance(self.states, list) or not isinstance(self.grid, list):
            raise ConfigurationError("states: expected lists")
        for index, state in enumerate(self.states):
            _check_numbers(f"states[{index}]", state)
        for index, axis in enumerate(self.grid):
            _check_numbers(f"grid[{index}]", axis)
            if not axis:
                raise ConfigurationError(f"grid[{index}]: axis has no values")
        if not self.states and not self.grid:
            raise ConfigurationError(
                "states: at least one initial condition is required"
            )

    def all_states(self) -> List[List[float]]:
        grid_states = []
        if self.grid:
            grid_states = [list(point) for point in itertools.product(*self.grid)]
        return [list(state) for state in self.states] + grid_states


@dataclass
class NoiseSettings:
    """Execution noise; empty state_std means the model's default levels."""

    state_std: List[float] = field(default_factory=list)
    input_std: List[float] = field(default_factory=list)

    def __post_init__(self):
        """Validate noise levels after initialization."""
        for name in ("state_std", "input_std"):
            _check_numbers(name, getattr(self, name))
            if any(v < 0 for v in getattr(self, name)):
                raise ConfigurationError(f"{name}: must be non-negative")


@dataclass
class CriteriaSettings:
    """Terminal thresholds; empty means the model's defaults."""

    thresholds: List[float] = field(default_factory=list)

    def __post_init__(self):
        """Validate thresholds after initialization."""
        _check_numbers("thresholds", self.thresholds)
        if any(v <= 0 for v in self.thresholds):
            raise ConfigurationError("thresholds: must be positive")


@dataclass
class AblationSettings:
    """
    Sweep grid: the product of all axes, plus pivoting object variants.

    Attributes:
        contact_counts (List[int]): Sizes of the enabled contact sets
        n_switches (List[int]): N_s values
        tree_iterations (List[int]): N_i values
        horizons (List[int]): N values
        aspect_ratios (List[float]): Pivoting height/width variants
    """

    contact_counts: List[int] = field(default_factory=lambda: [1])
    n_switches: List[int] = field(default_factory=lambda: [1])
    tree_iterations: List[int] = field(default_factory=lambda: [5])
    horizons: List[int] = field(default_factory=lambda: [24])
    aspect_ratios: List[float] = field(default_factory=list)

    def __post_init__(self):
        """Validate the sweep grid after initialization."""
        _check_int_list("contact_counts", self.contact_counts, 1)
        _check_int_list("n_switches", self.n_switches, 0)
        _check_int_list("tree_iterations", self.tree_iterations, 0)
        _check_int_list("horizons", self.horizons, 1)
        _check_numbers("aspect_ratios", self.aspect_ratios)
        if any(v <= 0 for v in self.aspect_ratios):
            raise ConfigurationError("aspect_ratios: must be positive")
        if max(self.n_switches) + 1 > min(self.horizons):
            raise ConfigurationError(
                "horizons: must be >= n_switches + 1 for every cell"
            )

    def points(self) -> List[AblationPoint]:
        return [
            AblationPoint(c, s, i, n)
            for c, s, i, n in itertools.product(
                self.contact_counts,
                self.n_switches,
                self.tree_iterations,
                self.horizons,
            )
        ]


@dataclass
class SimulationSettings:
    """Closed-loop runs per plan and whether to compare against open loop."""

    runs: int = 1
    compare_open_loop: bool = False

    def __post_init__(self):
        """Validate simulation settings after initialization."""
        _check_int("runs", self.runs, 1)
        if not isinstance(self.compare_open_loop, bool):
            raise ConfigurationError("compare_open_loop: expected true or false")
        if self.compare_open_loop and self.runs < 2:
            raise ConfigurationError(
                "runs: an open-loop comparison needs at least 2 runs"
            )


_SECTIONS = {
    "model": ModelConfig,
    "hybrid": HybridSettings,
    "ddp": DDPSettings,
    "cost": CostSettings,
    "initial_conditions": InitialConditionSpec,
    "noise": NoiseSettings,
    "criteria": CriteriaSettings,
    "ablation": AblationSettings,
    "simulation": SimulationSettings,
}


@dataclass
class ExperimentConfig:
    """
    One experiment document.

    Attributes:
        name (str): Experiment name
        description (str): Free text
        model (ModelConfig): Model selector and parameters
        hybrid (HybridSettings): Tree-search hyper-parameters
        ddp (DDPSettings): Solver settings
        cost (CostSettings): Cost weights and goal
        initial_conditions (InitialConditionSpec): Start states
        noise (NoiseSettings): Execution noise
        criteria (CriteriaSettings): Success thresholds
        simulation (SimulationSettings): Closed-loop run settings
        ablation (Optional[AblationSettings]): Sweep grid, if any
        seed (int): Noise seed
        output_dir (Optional[str]): Result directory
    """

    name: str
    model: ModelConfig
    hybrid: HybridSettings
    ddp: DDPSettings
    cost: CostSettings
    initial_conditions: InitialConditionSpec
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    criteria: CriteriaSettings = field(default_factory=CriteriaSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    ablation: Optional[AblationSettings] = None
    description: str = ""
    seed: int = 0
    output_dir: Optional[str] = None

    def __post_init__(self):
        """Cross-check sections against the selected model."""
        model = self.build_model()
        n, m = model.state_dim, model.input_dim

        kind = self.model.kind
        if len(self.cost.goal) != n:
            raise ConfigurationError(f"cost.goal: expected {n} values for {kind}")
        if len(self.cost.R) != m:
            raise ConfigurationError(f"cost.R: expected {m} values for {kind}")
        for mode in self.hybrid.enabled_modes:
            if mode not in model.modes:
                raise ConfigurationError(
                    f"hybrid.enabled_modes: mode {mode} not in {list(model.modes)}"
                )
        for index, state in enumerate(self.initial_conditions.all_states()):
            if len(state) != n:
                raise ConfigurationError(
                    f"initial_conditions.states[{index}]: expected {n} values"
                )
        if self.noise.state_std and len(self.noise.state_std) != n:
            raise ConfigurationError(f"noise.state_std: expected {n} values")
        if self.noise.input_std and len(self.noise.input_std) != m:
            raise ConfigurationError(f"noise.input_std: expected {m} values")
        if self.criteria.thresholds and len(self.criteria.thresholds) != n:
            raise ConfigurationError(f"criteria.thresholds: expected {n} values")
        if self.ablation and max(self.ablation.contact_counts) > len(model.modes):
            raise ConfigurationError(
                f"ablation.contact_counts: at most {len(model.modes)} contacts exist"
            )
        _check_int("seed", self.seed, 0)

    def _to_si(self, values: Sequence[float]) -> np.ndarray:
        state = np.asarray(values, dtype=float).copy()
        for i in ROTATIONAL_INDICES[self.model.kind]:
            state[i] = np.deg2rad(state[i])
        return state

    def build_model(self, aspect_ratio: Optional[float] = None) -> DynamicsModel:
        return self.model.build_model(aspect_ratio)

    def build_cost(self, model: Optional[DynamicsModel] = None) -> QuadraticCost:
        model = model or self.build_model()
        return QuadraticCost(
            Q=np.asarray(self.cost.Q, dtype=float),
            R=np.asarray(self.cost.R, dtype=float),
            Q_N=np.asarray(self.cost.Q_N, dtype=float),
            goal=self._to_si(self.cost.goal),
            angle_indices=model.angle_indices,
        )

    def initial_states(self) -> List[np.ndarray]:
        return [self._to_si(state) for state in self.initial_conditions.all_states()]

    def hybrid_config(self, workers: int = 1) -> HybridConfig:
        return HybridConfig(
            n_switches=self.hybrid.n_switches,
            enabled_modes=tuple(self.hybrid.enabled_modes),
            horizon=self.hybrid.horizon,
            tree_iterations=self.hybrid.tree_iterations,
            final_iterations=self.hybrid.final_iterations,
            workers=workers,
            ddp=self.ddp.build(self.hybrid.final_iterations),
        )

    def noise_model(self, seed: Optional[int] = None) -> NoiseModel:
        model = self.build_model()
        state_std = self.noise.state_std
        if not state_std:
            state_std = DEFAULT_STATE_NOISE[self.model.kind]
            logger.info(
                f"{self.name}: no noise.state_std, using {self.model.kind} "
                f"defaults {state_std}"
            )
        input_std = self.noise.input_std or [0.0] * model.input_dim
        return NoiseModel(
            state_std=tuple(self._to_si(state_std)),
            input_std=tuple(input_std),
            seed=self.seed if seed is None else seed,
        )

    def success_criteria(self) -> SuccessCriteria:
        model = self.build_model()
        if not self.criteria.thresholds:
            if self.model.kind == "pushing":
                return SuccessCriteria.pushing_default()
            return SuccessCriteria.pivoting_default()
        thresholds = tuple(self._to_si(self.criteria.thresholds))
        return SuccessCriteria(thresholds, model.angle_indices)

    def ablation_models(self) -> List[DynamicsModel]:
        ratios = self.ablation.aspect_ratios if self.ablation else []
        if ratios and self.model.kind == "pivoting":
            return [self.build_model(ratio) for ratio in ratios]
        return [self.build_model()]


def _build_section(cls, data: Any, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"{path}.{unknown[0]}: unknown field")
    try:
        return cls(**data)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}.{e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{path}: {e}") from e


def parse_experiment_config(data: Any, source: str = "<config>") -> ExperimentConfig:
    """
    Build an ExperimentConfig from a decoded JSON document.

    Args:
        data (Any): Decoded document
        source (str): Name used in error messages

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigurationError: With the dotted path of the offending field
    """
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be an object")

    top_level = {"name", "description", "seed", "output_dir"}
    unknown = sorted(set(data) - top_level - set(_SECTIONS))
    if unknown:
        raise ConfigurationError(f"{source}: {unknown[0]}: unknown field")
    for required in ("model", "cost", "initial_conditions"):
        if required not in data:
            raise ConfigurationError(f"{source}: {required}: section is required")

    sections = {}
    try:
        for key, cls in _SECTIONS.items():
            if key == "ablation" and data.get(key) is None:
                continue
            sections[key] = _build_section(cls, data.get(key), key)
        return ExperimentConfig(
            name=str(data.get("name", Path(source).stem)),
            description=str(data.get("description", "")),
            seed=data.get("seed", 0),
            output_dir=data.get("output_dir"),
            **sections,
        )
    except ConfigurationError as e:
        raise ConfigurationError(f"{source}: {e}") from e


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment document.

    Raises:
        ConfigurationError: If the file is unreadable, not valid JSON or invalid
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    return parse_experiment_config(data, str(path))


def list_presets() -> List[str]:
    """Names of the shipped experiment presets."""
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_preset(name: str) -> ExperimentConfig:
    """
    Load a shipped preset by name.

    Raises:
        ConfigurationError: If no preset has that name
    """
    path = PRESET_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigurationError(
            f"Unknown preset '{name}'. Available presets: {', '.join(list_presets())}"
        )
    return load_experiment_config(path)


def resolve_config(path_or_name: str) -> ExperimentConfig:
    """Load a config file when the path exists, otherwise a preset of that name."""
    if Path(path_or_name).is_file():
        return load_experiment_config(path_or_name)
    return load_preset(path_or_name)


def load_config_from_env() -> RuntimeSettings:
    """
    Load runtime settings from environment variables.

    Returns:
        RuntimeSettings: Loaded and validated settings

    Raises:
        ConfigurationError: If a value is invalid

    Environment Variables:
        HYBRID_DDP_LOG_LEVEL: Logging level (default: INFO)
        HYBRID_DDP_WORKERS: Worker processes (default: CPU count)
        HYBRID_DDP_OUTPUT_DIR: Result directory (default: results)
        HYBRID_DDP_SEED: Seed override (optional)
    """
    try:
        log_level = os.getenv("HYBRID_DDP_LOG_LEVEL", "INFO").upper()
        if log_level not in LOG_LEVELS:
            logger.warning(f"Invalid log level '{log_level}', using INFO")
            log_level = "INFO"

        workers = int(os.getenv("HYBRID_DDP_WORKERS", str(os.cpu_count() or 1)))
        seed = os.getenv("HYBRID_DDP_SEED")

        return RuntimeSettings(
            log_level=log_level,
            workers=workers,
            output_dir=os.getenv("HYBRID_DDP_OUTPUT_DIR", "results"),
            seed=int(seed) if seed else None,
        )

    except ConfigurationError:
        raise
    except Exception as e:
        raise ConfigurationError(f"Failed to load configuration from environment: {e}")


def setup_logging(log_level: str = "INFO") -> None:
    """
    Configure application logging.

    Args:
        log_level (str): Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
    """
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    logging.basicConfig(
        level=numeric_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )

    logger.debug(f"Logging configured at {log_level} level")


def print_config_template():
    """
    Print a template for environment variable configuration.

    Users can copy the output into a .env file.
    """
    template = """
# hybrid-ddp Environment Configuration
# Copy this content to a .env file and adjust the values

# Logging level: DEBUG shows per-iteration DDP records
# HYBRID_DDP_LOG_LEVEL=INFO

# Worker processes for leaf solves and ablation sweeps (default: CPU count)
# HYBRID_DDP_WORKERS=4

# Directory for plan, simulation and ablation outputs
# HYBRID_DDP_OUTPUT_DIR=results

# Seed override for execution noise
# HYBRID_DDP_SEED=0
    """
    print(template.strip())
