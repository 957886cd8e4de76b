"""Command-line entry point: train / eval / ablate / replay.

Exit codes: 0 ok, 1 usage, 2 configuration or checkpoint problem,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from wmr.config import RunConfig, config_with_overrides, load_config
from wmr.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericalError,
    SimulationError,
    TrajectoryFormatError,
    WMRError,
)
from wmr.services import pipeline
from wmr.services.checkpoint import load_checkpoint
from wmr.services.evaluation.replay import SCENARIOS
from wmr.services.learner.variants import VARIANTS

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _name_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown variants {unknown}; choose from {', '.join(VARIANTS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default="default", help="flat config file, or 'default'")
    common.add_argument("--seed", type=int, help="run seed (run.seed)")
    common.add_argument("--envs", type=int, help="number of parallel envs (run.envs)")
    common.add_argument("--iters", type=int, help="training iterations (run.iters)")
    common.add_argument("--variant", choices=VARIANTS, help="learner wiring (run.variant)")
    common.add_argument("--workers", type=int, help="worker processes for ablations (run.workers)")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="config override, repeatable"
    )

    parser = _Parser(prog="wmr", description="World-state reconstruction locomotion training")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", parents=[common], help="train a policy")
    train.add_argument("--out", help="output directory (run.out_dir)")
    train.add_argument("--resume", help="checkpoint to continue from")

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--out", help="output directory (run.out_dir)")
    ev.add_argument("--checkpoint", help="checkpoint file (omit for an untrained agent)")
    ev.add_argument("--episodes", type=int, help="episodes to evaluate")
    ev.add_argument("--payload-sweep", action="store_true", help="also run the standing payload sweep")

    ab = sub.add_parser("ablate", parents=[common], help="train and compare variants over seeds")
    ab.add_argument("--out", help="output directory (run.out_dir)")
    ab.add_argument("--variants", type=_name_list, default=["wmr", "no-cutoff"], help="comma-separated variants")
    ab.add_argument("--seeds", type=_int_list, default=[1, 2, 3], help="comma-separated seeds")
    ab.add_argument("--budget", type=int, help="training iterations per run (default run.iters)")
    ab.add_argument("--episodes", type=int, help="evaluation episodes per run")

    rp = sub.add_parser("replay", parents=[common], help="dump one deterministic trajectory")
    rp.add_argument("--out", help="trace CSV path")
    rp.add_argument("--checkpoint", help="checkpoint file (omit for an untrained agent)")
    rp.add_argument("--scenario", choices=SCENARIOS, default="training")
    rp.add_argument("--steps", type=int, help="maximum policy steps")
    return parser


def overrides_from_args(args: argparse.Namespace) -> list[str]:
    """--set items first, explicit flags after so they win."""
    items = list(args.set)
    for flag, key in (
        ("seed", "run.seed"),
        ("envs", "run.envs"),
        ("iters", "run.iters"),
        ("variant", "run.variant"),
        ("workers", "run.workers"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            items.append(f"{key}={json.dumps(value)}" if isinstance(value, str) else f"{key}={value}")
    if args.command != "replay" and getattr(args, "out", None):
        items.append(f"run.out_dir={json.dumps(args.out)}")
    return items


def _config_for(args, overrides, ckpt) -> RunConfig:
    if ckpt is None:
        return load_config(args.config, overrides)
    if args.config != "default":
        print(f"[WARN] --config {args.config} ignored: the checkpoint's embedded config is used")
    return config_with_overrides(ckpt.config_text, overrides)


def dispatch(args: argparse.Namespace) -> None:
    overrides = overrides_from_args(args)
    if args.command == "train":
        pipeline.run_train(load_config(args.config, overrides), args.resume)
    elif args.command == "eval":
        ckpt = load_checkpoint(args.checkpoint) if args.checkpoint else None
        cfg = _config_for(args, overrides, ckpt)
        pipeline.run_eval(cfg, ckpt, args.episodes, cfg.run.seed, args.payload_sweep)
    elif args.command == "ablate":
        cfg = load_config(args.config, overrides)
        budget = args.budget if args.budget is not None else cfg.run.iters
        pipeline.run_ablate(cfg, args.variants, args.seeds, budget, args.episodes, cfg.run.workers or None)
    elif args.command == "replay":
        ckpt = load_checkpoint(args.checkpoint) if args.checkpoint else None
        cfg = _config_for(args, overrides, ckpt)
        pipeline.run_replay(cfg, ckpt, cfg.run.seed, args.out, args.scenario, args.steps)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        dispatch(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CheckpointError, TrajectoryFormatError) as exc:
        print(f"[FAIL] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SimulationError, DataError) as exc:
        print(f"[FAIL] numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WMRError as exc:
        print(f"[FAIL] {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
