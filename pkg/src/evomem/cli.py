"""Command-line entry point: run, inspect-memory, export-context, replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .composer import PromptContext, compose_context, render_planner_prompt
from .config import Settings, resolve
from .core import TaskQuery, TaskType, derive_task_type
from .episodic import render_spatial_dump, render_trajectory_dump
from .errors import EvomemError, UsageError
from .evolution import MemoryBundle
from .persistence import load_snapshot, save_snapshot
from .semantic import SemanticStore
from .sim.harness import RunConfig, read_jsonl, replay_episode, run_suite, split_episodes, write_jsonl
from .sim.tasks import Suite, standard_suite
from .summarizers import HttpSummarizer, RuleBasedSummarizer
from .working_memory import WorkingMemory

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit; surface a typed error instead
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON file with setting overrides")
    p.add_argument("--window-size", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--cap-m", type=int)
    p.add_argument("--decay-lambda", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evomem", description="Hierarchical agent memory toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run a task suite")
    run.add_argument("--suite", help="suite JSON file (default: the bundled standard suite)")
    run.add_argument("--planner", choices=["memory", "memoryless"], default="memory")
    run.add_argument("--snapshot", help="start from this memory snapshot")
    _common(run)

    inspect = sub.add_parser("inspect-memory", help="dump a store from a snapshot")
    inspect.add_argument("--snapshot", required=True)
    inspect.add_argument("--graph", choices=["spatial", "trajectory", "semantic"], default="spatial")
    _common(inspect)

    export = sub.add_parser("export-context", help="render the prompt context for a task")
    export.add_argument("--snapshot")
    export.add_argument("--instruction", required=True)
    export.add_argument("--room", required=True)
    export.add_argument("--object", required=True)
    export.add_argument("--task-type", choices=[t.value for t in TaskType])
    export.add_argument("--full-prompt", action="store_true", help="wrap the context in the planner prompt")
    _common(export)

    replay = sub.add_parser("replay", help="re-render the logged contexts of an episode log")
    replay.add_argument("--episode", required=True, help="JSONL log written by `run`")
    replay.add_argument("--index", type=int, help="only this episode (0-based)")
    replay.add_argument("--show", action="store_true", help="print every re-rendered context")
    _common(replay)
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    flags = {
        "window_size": args.window_size,
        "top_k": args.top_k,
        "cap_m": args.cap_m,
        "decay_lambda": args.decay_lambda,
        "max_retries": args.max_retries,
        "seed": args.seed,
        "out": args.out,
    }
    return resolve(args.config, flags)


def _bundle(path: str | None, s: Settings) -> MemoryBundle:
    if path:
        return load_snapshot(path)
    return MemoryBundle(wm=WorkingMemory.start("", s.window_size), sem=SemanticStore(cap_m=s.cap_m, decay_lambda=s.decay_lambda))


def cmd_run(args: argparse.Namespace, s: Settings) -> int:
    suite = Suite.load(args.suite) if args.suite else standard_suite()
    config = RunConfig(
        step_cap=suite.step_cap, top_k=s.top_k, window_size=s.window_size,
        max_retries=s.max_retries, cap_m=s.cap_m, decay_lambda=s.decay_lambda,
    )
    summarizer = HttpSummarizer(s.summarizer_url) if s.summarizer_url else RuleBasedSummarizer()
    mb = load_snapshot(args.snapshot) if args.snapshot else None
    events: list[dict] = []
    report, mb = run_suite(suite, args.planner, s.seed, config=config, mb=mb, summarizer=summarizer, events=events)
    print(report.table())
    if s.out:
        out = Path(s.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
        write_jsonl([{"event": "episode_metrics", **e} for e in report.episodes], out / "episodes.jsonl")
        write_jsonl(events, out / "log.jsonl")
        save_snapshot(mb, out / "snapshot.json")
        print(f"wrote {out}/metrics.json, episodes.jsonl, log.jsonl, snapshot.json")
    return 0


def cmd_inspect(args: argparse.Namespace, s: Settings) -> int:
    mb = load_snapshot(args.snapshot)
    if args.graph == "spatial":
        print(render_spatial_dump(mb.skg))
    elif args.graph == "trajectory":
        print(render_trajectory_dump(mb.tkg))
    else:
        print(json.dumps(mb.sem.to_dict(), indent=2, ensure_ascii=False))
    return 0


def cmd_export(args: argparse.Namespace, s: Settings) -> int:
    mb = _bundle(args.snapshot, s)
    task_type = TaskType(args.task_type) if args.task_type else derive_task_type(args.instruction)
    q = TaskQuery(args.room, task_type, args.object)
    ctx = compose_context(q, mb.wm, mb.tkg, mb.skg, mb.sem, mb.now, top_k=s.top_k)
    if args.full_prompt:
        print(render_planner_prompt(args.instruction, ctx, mb.capacity))
    else:
        print(ctx.render())
    return 0


def cmd_replay(args: argparse.Namespace, s: Settings) -> int:
    try:
        events = read_jsonl(args.episode)
    except OSError as exc:
        raise UsageError(f"cannot read episode log {args.episode}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"episode log {args.episode} is not JSONL: {exc}") from exc
    episodes = split_episodes(events)
    if not episodes:
        raise UsageError(f"{args.episode} holds no episode_start record")
    if args.index is not None:
        if not 0 <= args.index < len(episodes):
            raise UsageError(f"--index must lie in [0, {len(episodes) - 1}]")
        episodes = [episodes[args.index]]
    total = mismatched = 0
    for ep in episodes:
        for logged, fresh in replay_episode(ep):
            total += 1
            if logged != fresh:
                mismatched += 1
            if args.show:
                print(PromptContext.from_dict(fresh).render() + "\n")
    print(f"replayed {total} contexts from {len(episodes)} episode(s): {total - mismatched} identical, {mismatched} differ")
    return 0 if mismatched == 0 else 1


COMMANDS = {"run": cmd_run, "inspect-memory": cmd_inspect, "export-context": cmd_export, "replay": cmd_replay}


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse and run; raises UsageError for bad invocations."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing subcommand; choose from " + ", ".join(COMMANDS))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args, _settings(args))


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return dispatch(argv)
    except UsageError as exc:
        print(f"evomem: usage error: {exc}", file=sys.stderr)
        return 2
    except EvomemError as exc:
        print(f"evomem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
