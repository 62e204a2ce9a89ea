"""Command-line entry point: demo, build-rm, train, ablate, oracle.

Exit codes: 0 on success, 1 when a check or run fails, 2 for unusable
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .agents import AgentVariant, TieBreak
from .errors import ConfigError, InvalidInputError, ParseError
from .graph_builder import graph_statistics, reward_machine_from_demos
from .gridworld import EnvConfig, ObservationMode, PickPlaceEnv, Task
from .harness import RunConfig, ablate, generate_demos, load_demos, rows_to_csv, run_training
from .oracle import CHECKS, run_check
from .rm_core import deserialize_rm, serialize_rm

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_CHOICES = {"task": Task, "variant": AgentVariant, "observation_mode": ObservationMode,
            "tie_break": TieBreak}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # one flag per RunConfig field, named after it
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if f.name in _CHOICES:
            p.add_argument(flag, dest=f.name, default=default.value,
                           choices=[e.value for e in _CHOICES[f.name]])
        elif isinstance(default, bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=default)
        else:
            p.add_argument(flag, dest=f.name, type=type(default), default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmshaping", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="write scripted demonstrations")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--randomize-layout", action="store_true")

    p = sub.add_parser("build-rm", help="build a reward machine from a demo file")
    p.add_argument("--demos", required=True)
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-multiple-initial", action="store_true")

    p = sub.add_parser("train", help="one training run, metrics as CSV")
    _add_run_flags(p)
    p.add_argument("--rm", help="reward machine file")
    p.add_argument("--demos", help="demonstration file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="sweep variants, demo counts and seeds")
    p.add_argument("--config", required=True, help="JSON file: RunConfig fields plus "
                   "variants, demo_counts, seeds, and optionally out_dir and workers")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("oracle", help="exact checks by value iteration on a small grid")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--check", required=True, choices=CHECKS)
    p.add_argument("--grid", nargs=2, type=int, metavar=("W", "H"), default=(3, 3))
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_demo(args) -> int:
    config = EnvConfig(Task(args.task), args.width, args.height, args.horizon,
                       randomize_layout=args.randomize_layout)
    generate_demos(args.task, args.count, args.seed, args.out, config)
    print(f"wrote {args.count} {args.task} demonstrations to {args.out}")
    return EXIT_OK


def _env_from_header(header: dict) -> PickPlaceEnv:
    if "task" not in header:
        raise ConfigError("demo file has no header line naming the task")
    return PickPlaceEnv(EnvConfig(Task(header["task"]), header.get("width", 4),
                                  header.get("height", 4), header.get("horizon", 8),
                                  randomize_layout=header.get("randomize_layout", False)))


def _cmd_build_rm(args) -> int:
    header, demos = load_demos(args.demos)
    if not demos:
        raise ConfigError(f"{args.demos} holds no demonstrations")
    env = _env_from_header(header)
    rm, graph = reward_machine_from_demos(env, demos, args.gamma,
                                          allow_multiple_initial=args.allow_multiple_initial)
    Path(args.out).write_bytes(serialize_rm(rm))
    print(json.dumps(graph_statistics(graph)))
    return EXIT_OK


def _cmd_train(args) -> int:
    doc = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    config = RunConfig.from_dict(doc)
    rm = deserialize_rm(Path(args.rm).read_bytes()) if args.rm else None
    demos = load_demos(args.demos)[1] if args.demos else []
    if rm is None and not demos:
        raise ConfigError("train needs --rm or --demos")
    rows = run_training(config, rm, demos).rows
    Path(args.out).write_text(rows_to_csv(rows))
    return EXIT_OK


def _cmd_ablate(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise ConfigError("ablation config must be a JSON object")
    try:
        variants = doc.pop("variants")
        demo_counts = doc.pop("demo_counts")
        seeds = doc.pop("seeds")
    except KeyError as exc:
        raise ConfigError(f"ablation config is missing {exc.args[0]!r}") from None
    out_dir = args.out_dir or doc.pop("out_dir", "ablation")
    doc.pop("out_dir", None)
    workers = args.workers or doc.pop("workers", 1)
    doc.pop("workers", None)
    result = ablate(RunConfig.from_dict(doc), variants, demo_counts, seeds, out_dir, workers)
    sys.stdout.write(result.summary_csv())
    if result.errors:
        print(f"{len(result.errors)} run(s) failed; see {out_dir}/errors.json", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _cmd_oracle(args) -> int:
    width, height = args.grid
    report = run_check(args.task, args.check, width, height, args.gamma, args.episodes, args.seed)
    print(report.to_json())
    return report.exit_code


COMMANDS = {"demo": _cmd_demo, "build-rm": _cmd_build_rm, "train": _cmd_train,
            "ablate": _cmd_ablate, "oracle": _cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidInputError, ParseError, OSError, json.JSONDecodeError,
            TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a failed run
        print(f"failed: {exc!r}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
