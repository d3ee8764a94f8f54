"""Feedback-driven memory updates: step-level and episode-level consolidation plus guided retry.

The engine is the only writer to a :class:`MemoryBundle`. Each bundle carries a
re-entrant lock so that a step update (working memory, trajectory edge,
spatial facts) is applied as one unit with respect to readers that take the
same lock.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

from .composer import ALL_SECTIONS, PromptContext, compose_context, token_proxy
from .core import ActionRecord, AgentState, EpisodeRecord, Outcome, StepRecord, TaskQuery
from .episodic import (
    SpatialKG,
    SpatialRelation,
    TrajectoryKG,
    begin_episode,
    finalize_episode,
    record_transition,
    upsert_spatial,
)
from .errors import EnvironmentUnavailable, NoOpenEpisode, SummarizerFailure
from .semantic import (
    SemanticStore,
    add_experience,
    find_guideline,
    object_category,
    prune,
    record_application,
    retrieve_guidelines,
    upsert_guideline,
)
from .summarizers import GUIDELINE_TAGS, GUIDELINE_TEXT, RuleBasedSummarizer, Summarizer
from .working_memory import DEFAULT_CAPACITY, WorkingMemory, append_step, consistency_check

log = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 2
WM_ONLY = frozenset({"working_memory"})


@dataclass
class MemoryBundle:
    wm: WorkingMemory = field(default_factory=WorkingMemory)
    tkg: TrajectoryKG = field(default_factory=TrajectoryKG)
    skg: SpatialKG = field(default_factory=SpatialKG)
    sem: SemanticStore = field(default_factory=SemanticStore)
    episode_counter: int = 0
    # open-episode bookkeeping, never persisted
    open: bool = field(default=False, compare=False)
    state_id: str | None = field(default=None, compare=False)
    seen_relations: list[SpatialRelation] = field(default_factory=list, compare=False)
    new_relations: set[SpatialRelation] = field(default_factory=set, compare=False)
    used_guidelines: list[str] = field(default_factory=list, compare=False)
    lock: Any = field(default_factory=threading.RLock, compare=False, repr=False)

    @property
    def capacity(self) -> int:
        return self.wm.capacity

    @property
    def now(self) -> int:
        """Episode counter value the open (or next) episode is stamped with."""
        return self.episode_counter + 1


def open_episode(mb: MemoryBundle, instruction: str, room: str, initial_summary: str, location: str = "") -> str:
    with mb.lock:
        mb.wm = WorkingMemory.start(location or room, mb.capacity)
        mb.state_id = begin_episode(mb.tkg, instruction, room, initial_summary)
        mb.seen_relations = []
        mb.new_relations = set()
        mb.used_guidelines = []
        mb.open = True
        return mb.state_id


def note_guidelines_used(mb: MemoryBundle, q: TaskQuery) -> None:
    for g in retrieve_guidelines(mb.sem, q, mb.now):
        if g.guideline_id not in mb.used_guidelines:
            mb.used_guidelines.append(g.guideline_id)


def on_step(
    mb: MemoryBundle,
    record: StepRecord,
    new_summary: str,
    observed_relations: Sequence[SpatialRelation] = (),
    room: str | None = None,
) -> MemoryBundle:
    """Working-memory append, trajectory transition, then spatial upserts of never-seen facts."""
    with mb.lock:
        if not mb.open or mb.state_id is None:
            raise NoOpenEpisode("on_step called with no open episode")
        wm = append_step(mb.wm, record)
        state = record_transition(mb.tkg, mb.state_id, record.action, record.outcome, new_summary, record.reasoning, room)
        mb.wm, mb.state_id = wm, state
        for rel in observed_relations:
            if rel not in mb.seen_relations:
                mb.seen_relations.append(rel)
            if mb.skg.insert_if_new(rel):
                mb.new_relations.add(rel)
        return mb


def _close(mb: MemoryBundle) -> None:
    mb.wm = WorkingMemory.start("", mb.capacity)
    mb.episode_counter += 1
    mb.open = False
    mb.state_id = None
    mb.seen_relations = []
    mb.new_relations = set()
    mb.used_guidelines = []


def on_episode_end(mb: MemoryBundle, episode: EpisodeRecord, summarizer: Summarizer) -> MemoryBundle:
    """Finalize the trajectory, re-assert spatial facts, consolidate semantics, reset.

    If the summarizer fails, the graphs still reflect the episode, the semantic
    store is left untouched, and SummarizerFailure is raised after the reset.
    """
    with mb.lock:
        now = episode.timestamp or mb.now
        finalize_episode(mb.tkg, episode)
        # facts first inserted during this episode already hold their one count
        for rel in mb.seen_relations:
            if rel not in mb.new_relations:
                upsert_spatial(mb.skg, rel)
        failure: Exception | None = None
        try:
            summary = summarizer.analyze_episode(episode)
        except Exception as exc:  # any summarizer fault degrades to a graph-only update
            failure, summary = exc, None
        if summary is not None:
            add_experience(
                mb.sem,
                task_instruction=episode.instruction,
                room_id=episode.room,
                task_type=episode.task_type,
                success=episode.first_attempt_success,
                action_summary="; ".join(a.phrase() for a in episode.action_sequence),
                key_failure_reasons=() if episode.first_attempt_success else summary.failure_causes,
                key_success_pattern=summary.success_patterns[0] if episode.first_attempt_success and summary.success_patterns else "",
                created_at=now,
            )
            first = Outcome(episode.first_attempt_success)
            for gid in mb.used_guidelines:
                record_application(mb.sem, gid, first, now)
            category = object_category(episode.object)
            tags_by_text = {GUIDELINE_TEXT[k]: GUIDELINE_TAGS[k] for k in GUIDELINE_TEXT}
            for text in summary.recommendations:
                existing = find_guideline(mb.sem, episode.task_type, category, text)
                if existing is not None and existing.guideline_id in mb.used_guidelines:
                    continue
                upsert_guideline(
                    mb.sem,
                    episode.task_type,
                    category,
                    text,
                    Outcome(episode.eventual_success),
                    now,
                    tags=tags_by_text.get(text, ()),
                )
            prune(mb.sem, now)
        _close(mb)
        if failure is not None:
            log.error("summarizer failed for episode %d: %s", now, failure)
            raise SummarizerFailure(str(failure)) from failure
        return mb


# attempt loop shared by the harness and guided retry


@dataclass(frozen=True)
class StepResult:
    outcome: Outcome
    observation: Any
    summary: str
    relations: tuple[SpatialRelation, ...]
    holding: str | None
    location: str
    room: str
    message: str = ""


class Environment(Protocol):
    task: Any

    def reset(self) -> Any: ...

    def step(self, action: ActionRecord) -> StepResult: ...

    def goals_met(self) -> bool: ...

    def goal_rate(self) -> float: ...

    def initial_summary(self) -> str: ...


class Planner(Protocol):
    uses_memory: bool

    def plan(self, ctx: PromptContext, observation: Any, task: Any) -> tuple[ActionRecord, str]: ...


@dataclass
class AttemptResult:
    steps: list[StepRecord]
    success: bool
    goal_rate: float
    env_steps: int
    planner_steps: int
    token_proxy_total: int
    wm_only_token_proxy_total: int
    contexts: list[dict[str, Any]]
    start_location: str = ""
    transitions: list[dict[str, Any]] = field(default_factory=list)


def run_attempt(
    env: Environment,
    planner: Planner,
    mb: MemoryBundle | None,
    query: TaskQuery,
    *,
    step_cap: int,
    top_k: int = 2,
    capacity: int = DEFAULT_CAPACITY,
    prior_failures: Sequence[str] = (),
    record: bool = True,
    on_record: Callable[[StepRecord], None] | None = None,
) -> AttemptResult:
    """Run one attempt from a freshly reset environment.

    With ``record`` the steps flow through :func:`on_step` into ``mb``;
    otherwise a private working memory is used and no store is written.
    """
    if step_cap < 1:
        raise ValueError("step_cap must be >= 1")
    try:
        obs = env.reset()
    except Exception as exc:
        raise EnvironmentUnavailable(f"environment reset failed: {exc}") from exc
    task = env.task
    start_location = getattr(obs, "location", "") or query.room
    use_memory = mb is not None and planner.uses_memory
    if record and mb is not None:
        open_episode(mb, task.instruction, query.room, env.initial_summary(), start_location)
        note_guidelines_used(mb, query)
        wm = mb.wm
    else:
        wm = WorkingMemory.start(start_location, mb.capacity if mb is not None else capacity)
    empty = MemoryBundle()
    steps: list[StepRecord] = []
    contexts: list[dict[str, Any]] = []
    transitions: list[dict[str, Any]] = []
    planner_steps = tokens = wm_tokens = 0

    def compose(warning=None) -> PromptContext:
        nonlocal planner_steps, tokens, wm_tokens
        src = mb if use_memory else empty
        sections = ALL_SECTIONS if use_memory else WM_ONLY
        ctx = compose_context(
            query, wm, src.tkg, src.skg, src.sem, src.now,
            pending_warning=warning, prior_failures=prior_failures, sections=sections, top_k=top_k,
        )
        wm_ctx = ctx if not use_memory else compose_context(
            query, wm, src.tkg, src.skg, src.sem, src.now, pending_warning=warning, sections=WM_ONLY, top_k=top_k
        )
        planner_steps += 1
        tokens += token_proxy(ctx)
        wm_tokens += token_proxy(wm_ctx)
        contexts.append(
            {
                "step": len(steps) + 1,
                "pending_warning": None if warning is None else {"rule_id": warning.rule_id, "message": warning.message},
                "prior_failures": list(prior_failures),
                "sections": sorted(sections),
                "context": ctx.to_dict(),
            }
        )
        return ctx

    for index in range(1, step_cap + 1):
        if env.goals_met():
            break
        ctx = compose()
        action, reasoning = planner.plan(ctx, obs, task)
        shown: str | None = None
        if use_memory:
            warning = consistency_check(wm, action)
            if warning is not None:
                ctx = compose(warning)
                action, reasoning = planner.plan(ctx, obs, task)
                shown = warning.rule_id
        result = env.step(action)
        step = StepRecord(
            step_index=index,
            action=action,
            outcome=result.outcome,
            reasoning=reasoning,
            observation_summary=result.message,
            agent_state=AgentState(result.holding, result.location),
            timestamp=index,
            consistency_warning=shown,
        )
        if record and mb is not None:
            on_step(mb, step, result.summary, result.relations, result.room)
            wm = mb.wm
        else:
            wm = append_step(wm, step)
        steps.append(step)
        transitions.append(
            {
                "summary": result.summary,
                "room": result.room,
                "relations": [[r.scene_id, r.room_id, r.source, r.relation, r.target] for r in result.relations],
            }
        )
        if on_record is not None:
            on_record(step)
        obs = result.observation
    return AttemptResult(
        steps=steps,
        success=env.goals_met(),
        goal_rate=env.goal_rate(),
        env_steps=len(steps),
        planner_steps=planner_steps,
        token_proxy_total=tokens,
        wm_only_token_proxy_total=wm_tokens,
        contexts=contexts,
        start_location=start_location,
        transitions=transitions,
    )


def guided_retry(
    env: Environment,
    planner: Planner,
    mb: MemoryBundle,
    episode: EpisodeRecord,
    max_retries: int = DEFAULT_MAX_RETRIES,
    *,
    summarizer: Summarizer | None = None,
    query: TaskQuery | None = None,
    step_cap: int = 30,
    top_k: int = 2,
    attempt_log: list[AttemptResult] | None = None,
) -> EpisodeRecord:
    """Re-attempt a failed task with the failure reflections in context.

    Retries never touch the graphs or the semantic store and never change
    ``first_attempt_success``; they stop at the first success.
    """
    if episode.first_attempt_success or max_retries <= 0:
        return episode
    if env is None:
        raise EnvironmentUnavailable("no environment to retry in")
    summarizer = summarizer or RuleBasedSummarizer()
    query = query or TaskQuery(episode.room, episode.task_type, episode.object or "object")
    reflections = [summarizer.summarize_failure(episode)]
    for _ in range(max_retries):
        result = run_attempt(
            env, planner, mb, query,
            step_cap=step_cap, top_k=top_k, prior_failures=tuple(reflections), record=False,
        )
        if attempt_log is not None:
            attempt_log.append(result)
        episode = episode.with_retry(result.steps, result.success)
        if result.success:
            break
        if result.steps:
            probe = EpisodeRecord(
                episode.instruction, episode.room, episode.task_type, tuple(result.steps), False, object=episode.object
            )
            text = summarizer.summarize_failure(probe)
            if text not in reflections:
                reflections.append(text)
    return episode
