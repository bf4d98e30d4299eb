import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from error_handler import ErrorHandler
from experiment_runner import apply_scenario, run_experiment, run_plan, run_stats
from models import Phase, Scenario
from sim_config import SimConfig
from sim_logger import sim_logger

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlsim",
        description="Signalized intersection simulator with a delayed Q-learning light controller",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="64-bit run seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--scenario", choices=[s.value for s in Scenario])
    common.add_argument("--horizon-s", type=float, dest="horizon_s", help="evaluation horizon in seconds")

    sub = parser.add_subparsers(dest="command", required=True)
    train_cmd = sub.add_parser("train", parents=[common], help="train a controller, then evaluate it")
    train_cmd.add_argument("--episodes", type=int, help="override learner.episodes")

    eval_cmd = sub.add_parser("eval", parents=[common], help="evaluate a saved Q-table")
    eval_cmd.add_argument("--qtable", help="Q-table CSV (defaults to <out>/qtable.csv)")

    plan_cmd = sub.add_parser("plan", parents=[common], help="plan a single AV trajectory")
    plan_cmd.add_argument("--t-now", type=float, default=0.0, dest="t_now")
    plan_cmd.add_argument("--p-now", type=float, required=True, dest="p_now")
    plan_cmd.add_argument("--v-now", type=float, required=True, dest="v_now")
    plan_cmd.add_argument("--announce", choices=["green", "red"], default="green")
    plan_cmd.add_argument("--amber", action="store_true", help="the announced block follows a color switch")

    sub.add_parser("stats", parents=[common], help="recompute reports from <out>/vehicles.csv")
    return parser


def load_config(args: argparse.Namespace) -> SimConfig:
    overrides = {}
    if getattr(args, "episodes", None) is not None:
        overrides["learner.episodes"] = args.episodes
    config = SimConfig(args.config, overrides=overrides)
    sim_fields = {}
    if args.seed is not None:
        sim_fields["seed"] = args.seed
    if args.horizon_s is not None:
        sim_fields["horizon_s"] = args.horizon_s
    if sim_fields:
        config = config.with_overrides(**sim_fields)
    return apply_scenario(config, Scenario(args.scenario) if args.scenario else None)


def dispatch(args: argparse.Namespace):
    config = load_config(args)
    sim_logger.configure(config.LOG_LEVEL, config.LOG_FILE_ENABLED, config.LOG_DIR)
    out = Path(args.out)
    if args.command in ("train", "eval"):
        qtable = Path(args.qtable) if getattr(args, "qtable", None) else None
        return run_experiment(config, args.command, out, qtable)
    if args.command == "plan":
        color = Phase.GREEN if args.announce == "green" else Phase.RED
        return run_plan(config, args.t_now, args.p_now, args.v_now, color, args.amber, out)
    return run_stats(config, out)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    exit_code, result = ErrorHandler().run_guarded(dispatch, args)
    stream = sys.stdout if exit_code == 0 else sys.stderr
    print(json.dumps(result.model_dump(exclude_none=True), indent=2, default=str), file=stream)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
