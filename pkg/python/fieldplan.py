#!/usr/bin/env python3
"""
FieldPlan command line
Run, validate and demo coupled neural field shadowing scenarios
"""

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from errors import FieldPlanError, NumericalError
from orchestrator import ExperimentResult, run_experiment
from results_writer import build_bundle, write_results
from scenario import RunSettings, bundled_scenario, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64

DEMOS = ("shadowing", "competition")


class FieldPlanParser(argparse.ArgumentParser):
    """Usage errors print the synopsis and exit 64"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(log_dir: str = "logs", verbose: bool = False) -> Path:
    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)
    log_file = log_path / f"fieldplan_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stderr)
        ],
        force=True,
    )
    return log_file


def build_parser() -> argparse.ArgumentParser:
    parser = FieldPlanParser(prog="fieldplan", description="Coupled dynamic neural field shadowing simulator")
    parser.add_argument("--log-dir", default="logs", help="Directory for log files (default: logs)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", metavar="{run,validate,demo}", required=True)

    run = sub.add_parser("run", help="Run a scenario and write results")
    run.add_argument("scenario", help="Path to the scenario TOML file")
    run.add_argument("--out", default=None, help="Output directory (default: results/<scenario name>)")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run.add_argument("--dt", type=float, default=None, help="Override the scenario time step")
    run.add_argument("--record-history", action="store_true", help="Record per-step field activations")
    run.add_argument("--progress", action="store_true", help="Show a progress bar over trials")

    validate = sub.add_parser("validate", help="Load and validate a scenario without running it")
    validate.add_argument("scenario", help="Path to the scenario TOML file")

    demo = sub.add_parser("demo", help="Run a bundled scenario")
    demo.add_argument("name", choices=DEMOS, help="Bundled scenario to run")
    demo.add_argument("--out", default=None, help="Output directory (default: results/<demo name>)")
    demo.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    demo.add_argument("--progress", action="store_true", help="Show a progress bar over trials")
    return parser


def print_summary(result: ExperimentResult):
    print(f"{'trial':<12} {'role':<9} {'peak':>10} {'onset':>9} {'shift':>10}")
    for trial in result.trials:
        peak = "-" if trial.peak_position is None else f"{trial.peak_position:.4f}"
        onset = "-" if trial.threshold_onset is None else f"{trial.threshold_onset:g}"
        delta = result.shift_from_baseline(trial)
        shift = "-" if delta is None else f"{delta:+.4f}"
        print(f"{trial.label:<12} {trial.role:<9} {peak:>10} {onset:>9} {shift:>10}")
    if result.shift is None:
        print("⚠️  baseline to washout shift undefined (missing plateau)")
    else:
        print(f"baseline → washout shift: {result.shift:+.4f}")


def execute(scenario_path: Path, out: Optional[str], seed: Optional[int] = None, dt: Optional[float] = None,
            record_history: bool = False, progress: bool = False) -> int:
    model, schedule, settings = load_scenario(scenario_path)
    settings: RunSettings = settings.with_overrides(seed=seed, dt=dt, record_history=record_history)
    out_dir = Path(out) if out else Path("results") / settings.name
    logger.info(f"Running '{settings.name}' with seed={settings.seed} dt={settings.dt:g} "
                f"integrator={settings.integrator}")

    result = run_experiment(
        model, schedule, settings.seed, settings.dt,
        integrator=settings.integrator,
        record_history=settings.record_history,
        plateau_std_tol=settings.plateau_std_tol,
        oscillator=settings.oscillator,
        target_mode=settings.target_mode,
        x0=settings.x0,
        progress=progress,
    )
    bundle = build_bundle(result, settings.outputs, scenario_name=settings.name, integrator=settings.integrator)
    written = write_results(bundle, out_dir)
    print_summary(result)
    print(f"✅ {len(written)} file(s) written to {out_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    return execute(Path(args.scenario), args.out, args.seed, args.dt, args.record_history, args.progress)


def cmd_validate(args) -> int:
    model, schedule, settings = load_scenario(args.scenario)
    print(f"✅ {settings.name}: {len(model.fields)} field(s) + {len(model.memories)} memory layer(s), "
          f"{len(model.edges)} edge(s), {len(model.gated_fields)} gated field(s), {len(schedule)} trial(s)")
    return EXIT_OK


def cmd_demo(args) -> int:
    return execute(bundled_scenario(args.name), args.out or str(Path("results") / args.name),
                   seed=args.seed, progress=args.progress)


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "demo": cmd_demo}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(args.log_dir, args.verbose)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as e:
        logger.error(f"Numerical abort: {e}")
        print(f"❌ numerical abort: {e}")
        return EXIT_NUMERICAL
    except FieldPlanError as e:
        logger.error(f"Scenario error: {e}")
        print(f"❌ {e}")
        return EXIT_SCENARIO
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"❌ {e}")
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
