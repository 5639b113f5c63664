"""
Command-line entry point
Wires configs to the optimizer, the simulator and the camera pipeline

    python main.py optimize --config data/palashi5.json --queue data/sample_queue.json
    python main.py simulate --scenario data/scenarios/palashi5_asymmetric.json --compare
    python main.py pipeline --config data/pipeline/synthetic_palashi5.json --cycles 3 --report
"""

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app import __version__
from app.core.config import describe_validation_error, load_intersection_config, load_queue_state, load_signal_plan
from app.core.errors import ConfigError, InvalidPlanError, SignalEngineError
from app.core.validation import validate_plan
from app.optimizer import nsga2
from app.optimizer.nsga2 import OptimizerParams
from app.optimizer.selection import SelectionPolicy, select_individual
from app.optimizer.objectives import plan_from_genome
from app.pipeline.orchestrator import SignalPipeline, load_pipeline_config
from app.simulator.compare import compare_controllers
from app.simulator.controllers import FixedTimeController
from app.simulator.engine import simulate
from app.simulator.scenario import AdaptiveControllerSpec, build_controller, build_controllers, load_scenario
from app.utils import detach_file_handlers, ensure_dir, save_to_csv, save_to_json, setup_logging, write_jsonl
from app.utils.config_loader import Config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INTERRUPTED = 3

# Field-guidance mode: 4 s before and after every green
GUIDANCE_PAD_S = 4

LOGGER_NAMES = ('cli', 'signal_pipeline')

MANIFEST_FILE = "manifest.json"


class RunManifest(BaseModel):
    """Everything needed to repeat one command run."""
    model_config = ConfigDict(extra="forbid")

    command: str
    argv: List[str]
    config: Dict[str, Any]
    seeds: List[int] = Field(default_factory=list)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    tool_version: str = __version__
    started_at: str
    finished_at: Optional[str] = None
    exit_code: Optional[int] = None


class _Run:
    """Output directory, log file and manifest of one command."""

    def __init__(self, command: str, out_dir: Path, argv: List[str]):
        self.out_dir = ensure_dir(out_dir)
        self.logger = setup_logging('cli', log_file=self.out_dir / "run.log")
        for name in LOGGER_NAMES[1:]:
            setup_logging(name, log_file=self.out_dir / "run.log")
        self.manifest = RunManifest(
            command=command,
            argv=argv,
            config={},
            started_at=datetime.now().isoformat(timespec="seconds"),
        )

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def artifact(self, key: str, name: str) -> Path:
        self.manifest.artifacts[key] = name
        return self.path(name)

    def finish(self, exit_code: int) -> int:
        self.manifest.finished_at = datetime.now().isoformat(timespec="seconds")
        self.manifest.exit_code = exit_code
        save_to_json(self.manifest.model_dump(mode="json"), self.path(MANIFEST_FILE))
        for name in LOGGER_NAMES:
            detach_file_handlers(logging.getLogger(name))
        return exit_code


def _out_dir(args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    return Path(Config().DEFAULT_OUTPUT_DIR) / args.command


def cmd_optimize(args: argparse.Namespace, run: _Run) -> int:
    """Optimize one observed queue and write the front and the selected plan."""
    cfg = load_intersection_config(args.config)
    queue = load_queue_state(args.queue, cfg)
    overrides: Dict[str, Any] = {"rng_seed": args.seed}
    if args.population is not None:
        overrides["population_size"] = args.population
    if args.generations is not None:
        overrides["generations"] = args.generations
    params = OptimizerParams(**overrides)
    pad = GUIDANCE_PAD_S if args.guidance else 0
    policy = SelectionPolicy(args.policy)
    weights = tuple(args.weights) if args.weights is not None else (0.5, 0.5)

    run.manifest.config = {
        "intersection": cfg.model_dump(mode="json"),
        "queue": queue.model_dump(mode="json"),
        "optimizer": params.model_dump(mode="json"),
        "policy": policy.value,
        "weights": list(weights),
        "guidance_pad_s": pad,
    }
    run.manifest.seeds = [params.rng_seed]

    run.logger.info("=" * 60)
    run.logger.info(f"Optimizing {cfg.num_links} links, {queue.total_vehicles} vehicles waiting")
    run.logger.info("=" * 60)
    front = nsga2.run(queue, cfg, params, guidance_pad_s=pad)
    chosen = select_individual(front, policy, weights)
    plan = plan_from_genome(chosen.genome, cfg, pad)
    violations = validate_plan(plan, cfg)
    if violations:
        raise InvalidPlanError(violations)

    save_to_json(
        {
            "members": front.to_records(),
            "reference_point": list(front.reference_point),
            "hypervolume_history": front.hypervolume_history,
            "evaluations": front.evaluations,
        },
        run.artifact("front", "front.json"),
    )
    save_to_json(plan.model_dump(mode="json"), run.artifact("plan", "plan.json"))
    run.logger.info(f"✓ Front of {len(front)} members; selected greens {plan.greens()}")
    print(f"f1={chosen.objectives.f1} f2={chosen.objectives.f2}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, run: _Run) -> int:
    """Simulate one controller, or compare every controller of the scenario."""
    scenario = load_scenario(args.scenario)
    updates: Dict[str, Any] = {}
    if args.seed is not None:
        updates["seeds"] = [args.seed]
    if args.horizon is not None:
        if args.horizon < 1:
            raise ConfigError(f"{args.scenario}: horizon_s must be at least 1, got {args.horizon}")
        updates["horizon_s"] = args.horizon
    if args.guidance:
        updates["options"] = scenario.options.model_copy(update={"guidance_pad_s": GUIDANCE_PAD_S})
    adaptive_updates: Dict[str, Any] = {}
    if args.policy is not None:
        adaptive_updates["policy"] = SelectionPolicy(args.policy)
    if args.weights is not None:
        adaptive_updates["weights"] = tuple(args.weights)
    if adaptive_updates:
        updates["controllers"] = [
            spec.model_copy(update=adaptive_updates)
            if isinstance(spec, AdaptiveControllerSpec) else spec
            for spec in scenario.controllers
        ]
    scenario = scenario.model_copy(update=updates)
    cfg = scenario.intersection_config

    run.manifest.config = scenario.model_dump(mode="json")
    run.manifest.seeds = list(scenario.seeds)

    if args.compare:
        controllers = build_controllers(scenario)
        run.logger.info("=" * 60)
        run.logger.info(f"Comparing {', '.join(c.name for c in controllers)} over {len(scenario.seeds)} seeds")
        run.logger.info("=" * 60)
        report = compare_controllers(
            cfg, scenario.arrival_model(), controllers, scenario.horizon_s, scenario.seeds,
            scenario.options, baseline=scenario.baseline,
        )
        save_to_json(report.to_dict(), run.artifact("comparison", "comparison.json"))
        save_to_csv(report.per_seed_frame(), run.artifact("per_seed", "comparison_per_seed.csv"))
        save_to_csv(report.per_link_frame(), run.artifact("per_link", "comparison_per_link.csv"))
        for row in report.summary_frame().to_dict(orient="records"):
            run.logger.info(
                f"✓ {row['controller']}: overall_avg {row['overall_avg']:.3f} "
                f"({row['overall_avg_delta_pct']:+.1f}%), wins {row['wins_vs_baseline']}/{len(scenario.seeds)}"
            )
        return EXIT_OK

    if args.plan:
        plan = load_signal_plan(args.plan)
        violations = validate_plan(plan, cfg)
        if violations:
            raise InvalidPlanError(violations)
        controller = FixedTimeController(plan.greens(), cfg, plan.order, plan.guidance_pad_s, name="plan")
        run.manifest.config["plan"] = plan.model_dump(mode="json")
    else:
        spec = scenario.controller_spec(args.controller) if args.controller else scenario.controllers[0]
        controller = build_controller(spec, cfg, scenario.options.guidance_pad_s)
    seed = scenario.seeds[0]
    run.logger.info(f"Simulating {controller.name} for {scenario.horizon_s} s, seed {seed}")
    metrics, series = simulate(cfg, scenario.arrival_model(seed), controller, scenario.horizon_s, scenario.options)
    save_to_json(metrics.model_dump(mode="json"), run.artifact("metrics", "metrics.json"))
    save_to_csv(series, run.artifact("timeseries", "timeseries.csv"))
    save_to_csv(metrics.per_link_frame(cfg), run.artifact("per_link", "per_link.csv"))
    run.logger.info(
        f"✓ overall_avg {metrics.overall_avg:.3f}, overall_max {metrics.overall_max}, "
        f"throughput {metrics.throughput_total}, {metrics.cycles_completed} cycles"
    )
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace, run: _Run) -> int:
    """Run the camera pipeline and record emitted plans and latencies."""
    config = load_pipeline_config(args.config)
    updates: Dict[str, Any] = {}
    if args.seed is not None:
        updates["optimizer"] = config.optimizer.model_copy(update={"rng_seed": args.seed})
    if args.policy is not None:
        updates["policy"] = SelectionPolicy(args.policy)
    if args.weights is not None:
        updates["weights"] = tuple(args.weights)
    if args.guidance:
        updates["guidance_pad_s"] = GUIDANCE_PAD_S
    config = config.model_copy(update=updates)

    run.manifest.config = config.model_dump(mode="json")
    run.manifest.seeds = [config.optimizer.rng_seed]

    pipeline = SignalPipeline(config)
    plans_path = run.artifact("plans", "plans.jsonl")
    write_jsonl([], plans_path)

    def on_cycle(result) -> None:
        write_jsonl([json.dumps(result.to_record(), sort_keys=True)], plans_path, append=True)

    exit_code = EXIT_OK
    try:
        with pipeline:
            pipeline.run(cycles=args.cycles, on_cycle=on_cycle)
    except KeyboardInterrupt:
        run.logger.warning("⚠ Interrupted; writing what was collected")
        exit_code = EXIT_INTERRUPTED
    finally:
        ledger = pipeline.ledger
        write_jsonl(ledger.to_jsonl_lines(), run.artifact("latency", "latency.jsonl"))
        save_to_csv(ledger.summary_frame(), run.artifact("latency_cycles", "latency_cycles.csv"))
        save_to_json(ledger.summary(), run.artifact("latency_summary", "latency_summary.json"))

    summary = ledger.summary()
    if args.report:
        report = {
            "latency": summary,
            "throughput": {str(k): v for k, v in pipeline.throughput_report().items()},
            "workers": pipeline.worker_report(),
            "skipped_cycles": pipeline.skipped_cycles,
        }
        save_to_json(report, run.artifact("report", "report.json"))
        print(json.dumps(summary, indent=2, sort_keys=True))
    run.logger.info(
        f"✓ {summary['cycles']} cycles, T_latency {summary['t_latency_ms']:.1f} ms, "
        f"trend {'stable' if summary['trend_stable'] else 'rising'}"
    )
    return exit_code


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    config = Config()
    policies = [p.value for p in SelectionPolicy]

    parser = argparse.ArgumentParser(
        prog="signal-engine",
        description="Adaptive traffic-signal optimization, simulation and camera pipeline",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument('--out', help=f"Output directory (default {config.DEFAULT_OUTPUT_DIR}/<command>)")
        p.add_argument('--guidance', action='store_true',
                       help=f'Pad every green by {GUIDANCE_PAD_S} s on both sides for manual guidance')
        p.add_argument('--weights', type=float, nargs=2, metavar=('W1', 'W2'),
                       help='f1 and f2 weights of the weighted policy')

    p = sub.add_parser("optimize", help="Optimize greens for one observed queue")
    p.add_argument('--config', required=True, help='Intersection config JSON')
    p.add_argument('--queue', required=True, help='QueueState JSON')
    p.add_argument('--seed', type=int, default=0, help='Optimizer seed')
    p.add_argument('--policy', choices=policies, default=config.DEFAULT_POLICY, help='Operating-point policy')
    p.add_argument('--population', type=int, help='Population size override')
    p.add_argument('--generations', type=int, help='Generation count override')
    common(p)

    p = sub.add_parser("simulate", help="Simulate a scenario")
    p.add_argument('--scenario', required=True, help='Scenario JSON')
    p.add_argument('--seed', type=int, help='Arrival seed (replaces the scenario seeds)')
    p.add_argument('--controller', help='Controller to simulate (default: first in the scenario)')
    p.add_argument('--plan', help='Simulate this plan JSON (for example optimize output) as a fixed-time controller')
    p.add_argument('--horizon', type=int, help='Horizon override in seconds')
    p.add_argument('--compare', action='store_true', help='Compare every controller over every seed')
    p.add_argument('--policy', choices=policies, help='Policy of adaptive controllers')
    common(p)

    p = sub.add_parser("pipeline", help="Run the camera pipeline")
    p.add_argument('--config', required=True, help='Pipeline config JSON')
    p.add_argument('--cycles', type=int, help='Stop after this many plans (default: run until interrupted)')
    p.add_argument('--seed', type=int, help='Optimizer seed override')
    p.add_argument('--report', action='store_true', help='Write and print the latency report')
    p.add_argument('--policy', choices=policies, help='Operating-point policy override')
    common(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0 success, 1 validation, 2 runtime, 3 interrupted."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    run = _Run(args.command, _out_dir(args), argv)

    try:
        exit_code = COMMANDS[args.command](args, run)
    except KeyboardInterrupt:
        run.logger.warning("⚠ Interrupted by user")
        exit_code = EXIT_INTERRUPTED
    except ConfigError as e:
        run.logger.error(f"✗ Invalid input: {e}")
        exit_code = EXIT_VALIDATION
    except ValidationError as e:
        run.logger.error(f"✗ Invalid input: {'; '.join(describe_validation_error(e))}")
        exit_code = EXIT_VALIDATION
    except (InvalidPlanError, ValueError) as e:
        run.logger.error(f"✗ {e}")
        exit_code = EXIT_VALIDATION
    except (SignalEngineError, OSError) as e:
        run.logger.error(f"✗ Run failed: {e}")
        exit_code = EXIT_RUNTIME
    return run.finish(exit_code)


if __name__ == "__main__":
    sys.exit(main())
