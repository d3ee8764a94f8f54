"""Episode and suite runners with metrics and replayable JSONL logs.

Metrics count the first attempt only; guided retries feed memory but never
the success rate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..composer import compose_context
from ..core import EpisodeRecord, StepRecord
from ..episodic import SpatialRelation
from ..errors import SummarizerFailure
from ..evolution import (
    DEFAULT_MAX_RETRIES,
    AttemptResult,
    MemoryBundle,
    Planner,
    guided_retry,
    on_episode_end,
    on_step,
    open_episode,
    run_attempt,
)
from ..persistence import bundle_from_dict, bundle_to_dict
from ..semantic import SemanticStore
from ..summarizers import RuleBasedSummarizer, Summarizer
from ..working_memory import DEFAULT_CAPACITY, ConsistencyWarning, WorkingMemory
from .planners import HouseholdEnv, MemorylessPlanner, MemoryPlanner
from .tasks import Suite, TaskSpec
from .world import Scene

log = logging.getLogger(__name__)

PLANNERS = {"memory": MemoryPlanner, "memoryless": MemorylessPlanner}


@dataclass(frozen=True)
class EpisodeMetrics:
    success: bool
    goal_condition_rate: float
    env_steps: int
    planner_steps: int
    prompt_token_proxy_total: int
    wm_only_token_proxy_total: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.goal_condition_rate <= 1.0:
            raise ValueError(f"goal_condition_rate out of range: {self.goal_condition_rate}")
        if self.success and self.goal_condition_rate != 1.0:
            raise ValueError("a successful episode must satisfy every goal condition")


@dataclass(frozen=True)
class RunConfig:
    step_cap: int = 30
    top_k: int = 2
    window_size: int = DEFAULT_CAPACITY
    max_retries: int = DEFAULT_MAX_RETRIES
    cap_m: int = 20
    decay_lambda: float = 0.99

    def fresh_bundle(self) -> MemoryBundle:
        return MemoryBundle(
            wm=WorkingMemory.start("", self.window_size),
            sem=SemanticStore(cap_m=self.cap_m, decay_lambda=self.decay_lambda),
        )


def run_episode(
    env: HouseholdEnv,
    planner: Planner,
    mb: MemoryBundle,
    task: TaskSpec,
    step_cap: int = 30,
    *,
    summarizer: Summarizer | None = None,
    max_retries: int = DEFAULT_MAX_RETRIES,
    top_k: int = 2,
    events: list[dict[str, Any]] | None = None,
) -> tuple[EpisodeRecord, EpisodeMetrics]:
    """First attempt (recorded), guided retry on failure, then episode-end consolidation."""
    if step_cap < 1:
        raise ValueError("step_cap must be >= 1")
    summarizer = summarizer or RuleBasedSummarizer()
    timestamp = mb.now
    if events is not None:
        events.append(
            {
                "event": "episode_start",
                "task": task.to_dict(),
                "start_room": env.start_room,
                "top_k": top_k,
                "initial_summary": env.initial_summary(),
                "snapshot": bundle_to_dict(mb),
            }
        )
    first = run_attempt(env, planner, mb, task.query, step_cap=step_cap, top_k=top_k, capacity=mb.capacity)
    if events is not None:
        _log_attempt(events, first)
    episode = EpisodeRecord(
        instruction=task.instruction,
        room=task.room,
        task_type=task.task_type,
        steps=tuple(first.steps),
        first_attempt_success=first.success,
        timestamp=timestamp,
        object=task.object,
        scene_id=env.scene.scene_id,
    )
    if not first.success and max_retries > 0:
        attempts: list[AttemptResult] = []
        episode = guided_retry(
            env, planner, mb, episode, max_retries,
            summarizer=summarizer, query=task.query, step_cap=step_cap, top_k=top_k, attempt_log=attempts,
        )
        if events is not None:
            for i, a in enumerate(attempts, start=1):
                events.append({"event": "retry", "attempt": i, "success": a.success, "env_steps": a.env_steps})
    if episode.steps:
        try:
            on_episode_end(mb, episode, summarizer)
        except SummarizerFailure as exc:
            log.warning("episode %d kept without semantic update: %s", timestamp, exc)
    else:
        # nothing to finalize (goals held at reset); still advance the clock
        mb.open = False
        mb.episode_counter += 1
    metrics = EpisodeMetrics(
        success=first.success,
        goal_condition_rate=first.goal_rate,
        env_steps=first.env_steps,
        planner_steps=first.planner_steps,
        prompt_token_proxy_total=first.token_proxy_total,
        wm_only_token_proxy_total=first.wm_only_token_proxy_total,
    )
    if events is not None:
        events.append({"event": "episode_end", "episode": episode.to_dict(), "metrics": asdict(metrics)})
    log.info("%s %s success=%s steps=%d", task.task_id, type(planner).__name__, first.success, first.env_steps)
    return episode, metrics


def _log_attempt(events: list[dict[str, Any]], first: AttemptResult) -> None:
    events.append({"event": "attempt_start", "start_location": first.start_location})
    for c in first.contexts:
        events.append({"event": "context", **c})
    for s, t in zip(first.steps, first.transitions):
        events.append({"event": "step", "step": s.to_dict(), **t})


def replay_episode(events: list[dict[str, Any]]) -> list[tuple[dict[str, Any], dict[str, Any]]]:
    """Re-render the first-attempt contexts of one logged episode.

    ``events`` runs from an ``episode_start`` record up to its ``episode_end``.
    Returns (logged, re-rendered) context dict pairs in log order.
    """
    start = events[0]
    if start.get("event") != "episode_start":
        raise ValueError("an episode log must begin with episode_start")
    task = TaskSpec.from_dict(start["task"])
    top_k = int(start.get("top_k", 2))
    mb = bundle_from_dict(start["snapshot"])
    attempt = next(e for e in events if e["event"] == "attempt_start")
    open_episode(mb, task.instruction, task.query.room, start["initial_summary"], attempt["start_location"])
    contexts = [e for e in events if e["event"] == "context"]
    steps = [e for e in events if e["event"] == "step"]
    pairs = []
    for c in contexts:
        index = c["step"]
        while mb.wm.action_count < index - 1:
            s = steps[mb.wm.action_count]
            rels = [SpatialRelation(*r) for r in s["relations"]]
            on_step(mb, StepRecord.from_dict(s["step"]), s["summary"], rels, s["room"])
        w = c["pending_warning"]
        ctx = compose_context(
            task.query, mb.wm, mb.tkg, mb.skg, mb.sem, mb.now,
            pending_warning=None if w is None else ConsistencyWarning(w["rule_id"], w["message"]),
            prior_failures=tuple(c["prior_failures"]),
            sections=frozenset(c["sections"]),
            top_k=top_k,
        )
        pairs.append((c["context"], ctx.to_dict()))
    return pairs


def split_episodes(events: list[dict[str, Any]]) -> list[list[dict[str, Any]]]:
    out: list[list[dict[str, Any]]] = []
    for e in events:
        if e.get("event") == "episode_start":
            out.append([])
        if out:
            out[-1].append(e)
    return out


@dataclass
class SuiteReport:
    suite: str
    planner: str
    seed: int
    episodes: list[dict[str, Any]] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return sum(e["metrics"]["success"] for e in self.episodes) / len(self.episodes)

    @property
    def mean_goal_condition_rate(self) -> float:
        return sum(e["metrics"]["goal_condition_rate"] for e in self.episodes) / len(self.episodes)

    @property
    def mean_env_steps(self) -> float:
        return sum(e["metrics"]["env_steps"] for e in self.episodes) / len(self.episodes)

    @property
    def total_token_proxy(self) -> int:
        return sum(e["metrics"]["prompt_token_proxy_total"] for e in self.episodes)

    @property
    def total_wm_only_token_proxy(self) -> int:
        return sum(e["metrics"]["wm_only_token_proxy_total"] for e in self.episodes)

    @property
    def learning_curve(self) -> dict[str, list[bool]]:
        """First-attempt success by encounter index within each task family."""
        curve: dict[str, list[bool]] = {}
        for e in self.episodes:
            curve.setdefault(e["family"], []).append(e["metrics"]["success"])
        return curve

    def summary(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "planner": self.planner,
            "seed": self.seed,
            "episodes": len(self.episodes),
            "success_rate": self.success_rate,
            "mean_goal_condition_rate": self.mean_goal_condition_rate,
            "mean_env_steps": self.mean_env_steps,
            "total_token_proxy": self.total_token_proxy,
            "total_wm_only_token_proxy": self.total_wm_only_token_proxy,
            "learning_curve": self.learning_curve,
        }

    def table(self) -> str:
        lines = [f"{'task':<6} {'family':<7} {'success':<8} {'GC':>5} {'steps':>6} {'tokens':>7}"]
        for e in self.episodes:
            m = e["metrics"]
            lines.append(
                f"{e['task_id']:<6} {e['family']:<7} {str(m['success']):<8} {m['goal_condition_rate']:>5.2f} "
                f"{m['env_steps']:>6} {m['prompt_token_proxy_total']:>7}"
            )
        lines.append(
            f"SR {100 * self.success_rate:.1f}%  GC {100 * self.mean_goal_condition_rate:.1f}%  "
            f"mean steps {self.mean_env_steps:.2f}  tokens {self.total_token_proxy}"
        )
        return "\n".join(lines)


def run_suite(
    suite: Suite,
    planner_kind: str,
    seed: int = 0,
    *,
    config: RunConfig | None = None,
    mb: MemoryBundle | None = None,
    summarizer: Summarizer | None = None,
    scene: Scene | None = None,
    events: list[dict[str, Any]] | None = None,
) -> tuple[SuiteReport, MemoryBundle]:
    """Run every task in order over one shared bundle; strictly sequential."""
    if not suite.tasks:
        raise ValueError("suite has no tasks")
    if planner_kind not in PLANNERS:
        raise ValueError(f"unknown planner {planner_kind!r}; choose from {sorted(PLANNERS)}")
    config = config or RunConfig(step_cap=suite.step_cap)
    mb = mb if mb is not None else config.fresh_bundle()
    planner = PLANNERS[planner_kind]()
    report = SuiteReport(suite.name, planner_kind, seed)
    for task in suite.tasks:
        env = HouseholdEnv(task, seed, scene)
        episode, metrics = run_episode(
            env, planner, mb, task, config.step_cap,
            summarizer=summarizer, max_retries=config.max_retries, top_k=config.top_k, events=events,
        )
        report.episodes.append(
            {
                "task_id": task.task_id,
                "family": task.family,
                "template": task.template,
                "eventual_success": episode.eventual_success,
                "metrics": asdict(metrics),
            }
        )
    return report, mb


def write_jsonl(events: list[dict[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
