"""
Command Line Interface Module.

This module provides the hybrid-ddp command. It loads experiment documents
(files or shipped presets), merges them with environment settings and
command line flags, and drives the planner, the closed-loop simulator and
ablation sweeps. Results are written as JSON and CSV files.
"""

import argparse
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .config import (
    ConfigurationError,
    ExperimentConfig,
    RuntimeSettings,
    list_presets,
    load_config_from_env,
    print_config_template,
    resolve_config,
    setup_logging,
)
from .errors import HybridDDPError
from .hybrid_planner import HybridPlan, NoPlanError, plan
from .simulation import (
    SimulationError,
    ablation_sweep,
    feedback_study,
    pusher_positions,
    simulate_closed_loop,
    success,
    terminal_error,
    write_ablation_csv,
    write_pusher_path_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_PLAN = 2


class CLIError(HybridDDPError):
    """Custom exception for CLI related errors."""

    pass


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        required=True,
        help="Experiment document path or preset name (see 'hybrid-ddp presets')",
    )
    parser.add_argument(
        "--seed", type=int, help="Noise seed (overrides HYBRID_DDP_SEED and the config)"
    )
    parser.add_argument(
        "--workers",
        type=int,
        help="Worker processes (overrides HYBRID_DDP_WORKERS, default: CPU count)",
    )
    parser.add_argument(
        "--out", type=str, help="Output directory (overrides HYBRID_DDP_OUTPUT_DIR)"
    )
    parser.add_argument(
        "--output-format",
        choices=["json", "text"],
        default="text",
        help="Format of the summary printed to stdout (default: text)",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging, including per-iteration DDP records",
    )
    parser.add_argument(
        "--quiet",
        "-q",
        action="store_true",
        help="Enable quiet mode (ERROR level only)",
    )


def setup_argument_parser() -> argparse.ArgumentParser:
    """
    Set up and configure the command line argument parser.

    Returns:
        argparse.ArgumentParser: Configured argument parser
    """
    parser = argparse.ArgumentParser(
        prog="hybrid-ddp",
        description=(
            "Hybrid input-constrained DDP - plan, simulate and benchmark "
            "contact-switching manipulation primitives"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Plan from every initial condition of a preset
  hybrid-ddp plan --config pushing-three-contacts

  # Execute a saved plan under the preset's noise
  hybrid-ddp simulate --config pushing-straight-line --seed 3 \
      --plan results/pushing-straight-line/plan_000.json

  # Run an ablation sweep on 8 worker processes
  hybrid-ddp ablate --config pushing-sweep-contacts --workers 8 --out sweeps

  # List presets / print the environment template
  hybrid-ddp presets
  hybrid-ddp env-template

Environment Variables:
  HYBRID_DDP_LOG_LEVEL   Logging level (default: INFO)
  HYBRID_DDP_WORKERS     Worker processes (default: CPU count)
  HYBRID_DDP_OUTPUT_DIR  Output directory (default: results)
  HYBRID_DDP_SEED        Noise seed override
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    plan_parser = subparsers.add_parser(
        "plan", help="Run the hybrid planner from every initial condition"
    )
    _add_common_arguments(plan_parser)
    plan_parser.set_defaults(handler=cmd_plan)

    simulate_parser = subparsers.add_parser(
        "simulate", help="Execute a plan in closed loop under noise"
    )
    _add_common_arguments(simulate_parser)
    simulate_parser.add_argument(
        "--plan",
        type=str,
        help="Plan JSON written by 'plan' (default: plan the first start)",
    )
    simulate_parser.set_defaults(handler=cmd_simulate)

    ablate_parser = subparsers.add_parser("ablate", help="Run an ablation sweep")
    _add_common_arguments(ablate_parser)
    ablate_parser.set_defaults(handler=cmd_ablate)

    presets_parser = subparsers.add_parser("presets", help="List shipped presets")
    presets_parser.set_defaults(handler=cmd_presets)

    template_parser = subparsers.add_parser(
        "env-template", help="Print the environment variable template"
    )
    template_parser.set_defaults(handler=cmd_env_template)

    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    """
    Configure logging based on CLI options.

    Args:
        verbose (bool): Enable verbose (DEBUG) logging
        quiet (bool): Enable quiet (ERROR only) logging
    """
    if verbose and quiet:
        logger.warning(
            "Both --verbose and --quiet specified, using normal logging level"
        )
        return

    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.info("Verbose logging enabled")
    elif quiet:
        logging.getLogger().setLevel(logging.ERROR)


def load_configuration(args: argparse.Namespace) -> Dict[str, Any]:
    """
    Combine the experiment document, environment settings and flags.

    Command line flags override environment variables, which override the
    experiment document.

    Args:
        args (argparse.Namespace): Parsed command line arguments

    Returns:
        Dict[str, Any]: Keys ``experiment``, ``workers``, ``seed`` and ``out_dir``

    Raises:
        CLIError: If the document or the environment is invalid
    """
    try:
        runtime: RuntimeSettings = load_config_from_env()
        experiment: ExperimentConfig = resolve_config(args.config)
    except ConfigurationError as e:
        raise CLIError(str(e)) from e

    workers = args.workers if args.workers is not None else runtime.workers
    if workers < 1:
        raise CLIError("--workers must be at least 1")

    if args.seed is not None:
        seed = args.seed
    elif runtime.seed is not None:
        seed = runtime.seed
    else:
        seed = experiment.seed

    out_root = (
        args.out
        or os.getenv("HYBRID_DDP_OUTPUT_DIR")
        or experiment.output_dir
        or runtime.output_dir
    )
    config = {
        "experiment": experiment,
        "workers": workers,
        "seed": seed,
        "out_dir": Path(out_root) / experiment.name,
        "output_format": args.output_format,
    }
    logger.debug(
        f"Loaded experiment '{experiment.name}' (workers={workers}, seed={seed}, "
        f"out={config['out_dir']})"
    )
    return config


def _write_json(path: Path, document: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return path


def format_output(summary: Dict[str, Any], output_format: str) -> str:
    """
    Format a command summary for display.

    Args:
        summary (Dict[str, Any]): Summary with ``title`` and ``rows`` (list of dicts)
        output_format (str): Output format ('json' or 'text')

    Returns:
        str: Formatted output string
    """
    if output_format == "json":
        return json.dumps(summary, indent=2)

    lines = [summary["title"], "=" * len(summary["title"])]
    for row in summary["rows"]:
        lines.append("  ".join(f"{key}={value}" for key, value in row.items()))
    for note in summary.get("notes", []):
        lines.append(note)
    return "\n".join(lines)


def _fmt(values: Sequence[float]) -> str:
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"


def _plan_document(
    experiment: ExperimentConfig, result: HybridPlan, x0, ok: bool
) -> Dict[str, Any]:
    document = result.to_dict()
    document["config"] = experiment.name
    document["initial_state"] = list(map(float, x0))
    document["success"] = ok
    return document


def cmd_plan(args: argparse.Namespace) -> int:
    """
    Plan from every initial condition and write one plan file per start.

    Returns:
        int: 0 when every start produced a plan, 2 when any start was fully pruned
    """
    config = load_configuration(args)
    experiment: ExperimentConfig = config["experiment"]
    model = experiment.build_model()
    cost = experiment.build_cost(model)
    criteria = experiment.success_criteria()
    hybrid_config = experiment.hybrid_config(config["workers"])

    rows: List[Dict[str, Any]] = []
    exit_code = EXIT_OK
    for index, x0 in enumerate(experiment.initial_states()):
        try:
            result = plan(model, cost, x0, hybrid_config)
        except NoPlanError as e:
            logger.error(f"Start {index}: {e}")
            print(f"Error: start {index}: {e}", file=sys.stderr)
            rows.append({"start": index, "status": "no-plan"})
            exit_code = EXIT_NO_PLAN
            continue

        ok = success(result.trajectory.final_state, cost.goal, criteria)
        logger.info(
            f"Start {index}: planned in {result.planning_time.tree:.3f}s tree + "
            f"{result.planning_time.final:.3f}s final"
        )
        path = _write_json(
            config["out_dir"] / f"plan_{index:03d}.json",
            _plan_document(experiment, result, x0, ok),
        )
        rows.append(
            {
                "start": index,
                "best": result.best.label,
                "cost": f"{result.cost:.6g}",
                "success": ok,
                "error": _fmt(
                    terminal_error(
                        result.trajectory.final_state, cost.goal, cost.angle_indices
                    )
                ),
                "file": str(path),
            }
        )

    summary = {"title": f"Plans for {experiment.name}", "rows": rows}
    print(format_output(summary, args.output_format))
    return exit_code


def _load_plan(path: str, experiment: ExperimentConfig) -> HybridPlan:
    try:
        document = json.loads(Path(path).read_text())
        result = HybridPlan.from_dict(document)
    except (OSError, ValueError, KeyError, TypeError, HybridDDPError) as e:
        raise CLIError(f"Cannot read plan {path}: {e}") from e
    if result.model and result.model != experiment.model.kind:
        raise CLIError(
            f"Plan {path} was made for model '{result.model}' but the config uses "
            f"'{experiment.model.kind}'"
        )
    return result


def cmd_simulate(args: argparse.Namespace) -> int:
    """
    Execute a plan in closed loop and write the simulation results.

    Returns:
        int: 0 on completion, 1 on plan/config mismatch, 2 when no plan exists
    """
    config = load_configuration(args)
    experiment: ExperimentConfig = config["experiment"]
    model = experiment.build_model()
    criteria = experiment.success_criteria()
    out_dir: Path = config["out_dir"]

    if args.plan:
        result = _load_plan(args.plan, experiment)
    else:
        cost = experiment.build_cost(model)
        hybrid_config = experiment.hybrid_config(config["workers"])
        result = plan(model, cost, experiment.initial_states()[0], hybrid_config)

    settings = experiment.simulation
    noise = experiment.noise_model(config["seed"])
    try:
        if settings.compare_open_loop:
            study = feedback_study(model, result, noise, criteria, settings.runs)
            _write_json(out_dir / f"simulation_seed{noise.seed}.json", study.to_dict())
            runs = list(study.open_loop) + list(study.closed_loop)
            notes = [
                f"open-loop s.d.:   {_fmt(study.open_loop_sd)}",
                f"closed-loop s.d.: {_fmt(study.closed_loop_sd)}",
            ]
        else:
            runs = [
                simulate_closed_loop(
                    model, result, noise.with_seed(noise.seed + i), criteria
                )
                for i in range(settings.runs)
            ]
            _write_json(
                out_dir / f"simulation_seed{noise.seed}.json",
                {"runs": [run.to_dict() for run in runs]},
            )
            notes = []
    except SimulationError as e:
        raise CLIError(str(e)) from e

    if experiment.model.kind == "pushing":
        path = write_pusher_path_csv(
            pusher_positions(result, model.params), out_dir / "pusher_path.csv"
        )
        notes.append(f"pusher path: {path}")

    rows = [
        {
            "seed": run.seed,
            "feedback": run.feedback,
            "success": run.success,
            "error": _fmt(run.terminal_error),
        }
        for run in runs
    ]
    summary = {
        "title": f"Simulation of {experiment.name}",
        "rows": rows,
        "notes": notes,
    }
    print(format_output(summary, args.output_format))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    """
    Run the experiment's ablation grid and write the CSV.

    Returns:
        int: 0 on completion, 1 when the document has no grid
    """
    config = load_configuration(args)
    experiment: ExperimentConfig = config["experiment"]
    if experiment.ablation is None:
        raise CLIError(f"Experiment '{experiment.name}' has no ablation grid")
    points = experiment.ablation.points()
    if not points:
        raise CLIError(f"Experiment '{experiment.name}' has an empty ablation grid")

    models = experiment.ablation_models()
    records = ablation_sweep(
        models,
        experiment.build_cost(models[0]),
        points,
        experiment.initial_states(),
        experiment.success_criteria(),
        experiment.hybrid_config(workers=1),
        workers=config["workers"],
    )
    path = write_ablation_csv(records, config["out_dir"] / "ablation.csv")

    matrix: Dict[int, Dict[str, str]] = defaultdict(dict)
    for record in records:
        p = record.point
        column = f"Ns{p.n_switches}/Ni{p.tree_iterations}/N{p.horizon}"
        matrix[p.contact_count][column] = f"{record.success_rate:.2f}"
    rows = [{"contacts": count, **cells} for count, cells in sorted(matrix.items())]
    summary = {
        "title": f"Success rates for {experiment.name}",
        "rows": rows,
        "notes": [f"csv: {path}"],
    }
    print(format_output(summary, args.output_format))
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    """Print the names of the shipped presets."""
    for name in list_presets():
        print(name)
    return EXIT_OK


def cmd_env_template(args: argparse.Namespace) -> int:
    print_config_template()
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for the CLI application.

    Args:
        argv (Optional[Sequence[str]]): Arguments; defaults to sys.argv[1:]

    Returns:
        int: Exit code (0 success, 1 configuration or usage error, 2 no plan)
    """
    parser = setup_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK

    try:
        setup_logging(os.getenv("HYBRID_DDP_LOG_LEVEL", "INFO"))
        configure_logging(
            getattr(args, "verbose", False), getattr(args, "quiet", False)
        )
        return args.handler(args)

    except (CLIError, ConfigurationError) as e:
        logger.error(f"CLI error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except NoPlanError as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NO_PLAN
    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        print("\nOperation cancelled by user", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"Unexpected error in main: {e}")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
