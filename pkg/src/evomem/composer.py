"""Hierarchical retrieval across all stores and rendering into the planner-facing context.

Block order is fixed: guidelines, room patterns, experiences, action hints,
spatial guidance, working memory. Every renderer is a pure function of its
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import TaskQuery
from .episodic import SpatialKG, TrajectoryKG, action_hints, query_trajectories
from .semantic import ExperienceRecord, Guideline, SemanticStore, retrieve_experiences, retrieve_guidelines
from .working_memory import EMPTY_MARKER, ConsistencyWarning, WorkingMemory, render_working_memory

CONTEXT_HEADER = "Enhanced Memory Context:"
GUIDELINES_HEADER = "Valuable Guidelines (Proven Strategies):"
GUIDELINES_INTRO = (
    "These guidelines have been validated through successful task completions. "
    "PRIORITIZE them in your decision making:"
)
GUIDELINES_FOOTER = (
    "CRITICAL: These guidelines come from proven successful experiences. Follow them whenever applicable."
)
ROOM_PATTERNS_HEADER = "Room Successful Patterns:"
EXPERIENCES_HEADER = "Relevant Experiences:"
SPATIAL_BLOCK = "\n".join(
    [
        "Spatial Reasoning:",
        "- Observe the current view to understand object positions",
        "- Note spatial relationships: left/right, front/back, near/far",
        "- Consider which objects to approach first based on their locations",
        "- Plan efficient movement routes between objects",
    ]
)

SECTIONS = ("guidelines", "room_patterns", "experiences", "action_hints", "spatial", "working_memory")
ALL_SECTIONS = frozenset(SECTIONS)

DEFAULT_SYSTEM_PROMPT = "(Base ALFRED system prompt with action descriptions and guidelines)"
DEFAULT_OBSERVATION = "(Visual observation: RGB image, object detection...)"
ACTION_SPACE_LINE = "find, pick up, put down, turn on, turn off, open, close, slice, ..."


@dataclass(frozen=True)
class PromptContext:
    guidelines_block: str = ""
    room_patterns_block: str = ""
    experiences_block: str = ""
    action_hints_block: str = ""
    spatial_guidance_block: str = ""
    working_memory_block: str = ""
    total_chars: int = 0

    @classmethod
    def build(cls, *blocks: str) -> PromptContext:
        ctx = cls(*blocks)
        return cls(*blocks, total_chars=len(ctx.render().encode("utf-8")))

    @property
    def blocks(self) -> tuple[str, ...]:
        return (
            self.guidelines_block,
            self.room_patterns_block,
            self.experiences_block,
            self.action_hints_block,
            self.spatial_guidance_block,
            self.working_memory_block,
        )

    def render(self) -> str:
        return "\n\n".join([CONTEXT_HEADER] + [b for b in self.blocks if b])

    def to_dict(self) -> dict[str, object]:
        return dict(zip(SECTIONS, self.blocks)) | {"total_chars": self.total_chars}

    @classmethod
    def from_dict(cls, d: dict[str, object]) -> PromptContext:
        return cls.build(*(str(d.get(s, "")) for s in SECTIONS))


def confidence_percent(g: Guideline) -> int:
    """Integer percent, rounded down (12/14 prints as 85)."""
    return (100 * g.n_success) // g.n_total if g.n_total else 0


def _validation_note(g: Guideline) -> str:
    times = "time" if g.n_success == 1 else "times"
    return f"Validated {g.n_success} {times}, {confidence_percent(g)}% confidence"


def _first_sentence(text: str) -> str:
    head, sep, _ = text.partition(". ")
    return head + "." if sep else text


def render_guidelines(gs: Sequence[Guideline], *, compact: bool = False) -> str:
    """Numbered guideline list.

    The full layout carries an introduction and a closing line and puts the
    validation note under each description; the compact layout used inside the
    planner prompt keeps one line per guideline.
    """
    lines = [GUIDELINES_HEADER]
    if compact:
        if not gs:
            return "\n".join(lines + [EMPTY_MARKER])
        for i, g in enumerate(gs, 1):
            lines.append(f"{i}. {_first_sentence(g.description)} [{_validation_note(g)}] [{', '.join(g.tags)}]")
        return "\n".join(lines)
    lines.append(GUIDELINES_INTRO)
    if not gs:
        lines += ["", EMPTY_MARKER]
    for i, g in enumerate(gs, 1):
        lines += ["", f"{i}. {g.description}", f"({_validation_note(g)}) [{', '.join(g.tags)}]"]
    lines += ["", GUIDELINES_FOOTER]
    return "\n".join(lines)


def render_room_patterns(q: TaskQuery, tkg: TrajectoryKG, top_k: int) -> str:
    ranked = query_trajectories(tkg, q, max(len(tkg.records), 1))
    hits = [r for r in ranked if r.success and r.room == q.room][:top_k]
    lines = [ROOM_PATTERNS_HEADER]
    if not hits:
        lines.append(EMPTY_MARKER)
    for i, rec in enumerate(hits, 1):
        lines.append(f"{i}. {rec.task_type.value}: {'; '.join(a.phrase() for a in rec.action_sequence)}")
    return "\n".join(lines)


def experience_text(exp: ExperienceRecord) -> str:
    if exp.success:
        return exp.key_success_pattern or exp.action_summary
    return "Avoid: " + "; ".join(exp.key_failure_reasons) if exp.key_failure_reasons else exp.action_summary


def render_experiences(exps: Iterable[ExperienceRecord], prior_failures: Sequence[str] = ()) -> str:
    items = [f"Previous attempt: {p}" for p in prior_failures] + [experience_text(e) for e in exps]
    lines = [EXPERIENCES_HEADER]
    if not items:
        lines.append(EMPTY_MARKER)
    lines += [f"{i}. {text}" for i, text in enumerate(items, 1)]
    return "\n".join(lines)


def render_action_hints(tkg: TrajectoryKG, object_id: str) -> str:
    hints = action_hints(tkg, object_id)
    body = "; ".join(a.phrase() for a in hints) if hints else EMPTY_MARKER
    return f"Successful actions for {object_id}: {body}"


def compose_context(
    q: TaskQuery,
    wm: WorkingMemory,
    tkg: TrajectoryKG,
    skg: SpatialKG,
    sem: SemanticStore,
    now: int,
    *,
    pending_warning: ConsistencyWarning | None = None,
    prior_failures: Sequence[str] = (),
    sections: frozenset[str] = ALL_SECTIONS,
    top_k: int = 2,
) -> PromptContext:
    """Retrieve from every store for ``q`` and render the ordered context.

    ``sections`` restricts which blocks are produced; omitted blocks are empty
    strings and drop out of the rendered text. The spatial block is static
    guidance, so ``skg`` contributes nothing to it.
    """
    unknown = set(sections) - ALL_SECTIONS
    if unknown:
        raise ValueError(f"unknown context sections: {sorted(unknown)}")

    def want(name: str) -> bool:
        return name in sections

    return PromptContext.build(
        render_guidelines(retrieve_guidelines(sem, q, now), compact=True) if want("guidelines") else "",
        render_room_patterns(q, tkg, top_k) if want("room_patterns") else "",
        render_experiences(retrieve_experiences(sem, q, top_k), prior_failures) if want("experiences") else "",
        render_action_hints(tkg, q.object) if want("action_hints") else "",
        SPATIAL_BLOCK if want("spatial") else "",
        render_working_memory(wm, pending_warning, compact=True) if want("working_memory") else "",
    )


def token_proxy(ctx: PromptContext | str) -> int:
    """Desk-scale token estimate: characters divided by four."""
    if isinstance(ctx, PromptContext):
        return ctx.total_chars // 4
    return len(ctx.encode("utf-8")) // 4


def render_planner_prompt(
    instruction: str,
    ctx: PromptContext,
    capacity: int = 5,
    *,
    system_prompt: str = DEFAULT_SYSTEM_PROMPT,
    observation: str = DEFAULT_OBSERVATION,
) -> str:
    head = [
        "SYSTEM PROMPT",
        system_prompt,
        "",
        "Streaming Memory System:",
        f"You have multi-layer memory: working memory (last {capacity} actions), episodic memory "
        "(knowledge graphs indexed by room number and task type), and semantic memory (experience and guideline).",
        "",
        "Core Rules:",
        f"1. Working Memory: Always record last {capacity} actions and current holding status before acting",
        "2. Single Object: Robot can only hold one object at a time",
        '3. Container Logic: "Put down" near a container automatically places object INSIDE container',
        "4. Episodic Graph: Store object-location-action transitions per room number, predict state changes",
        "5. Experience Storage: Record task, strategy, outcome, and cause for success/failure reflection",
        "6. Guideline Application: Apply rules for tasks that are often done incorrectly or inefficiently",
        "",
        "Cleaning Tasks (rinse/clean/wet):",
        "Pick up object, Put in sink, Turn on faucet, Rinse, Turn off faucet, Pick up, Place at target",
        "",
        "TASK INSTRUCTION",
        instruction,
        "",
        "MEMORY CONTEXT",
        "",
    ]
    tail = [
        "",
        "CURRENT OBSERVATION",
        observation,
        "",
        "ACTION SPACE",
        ACTION_SPACE_LINE,
        "",
        "YOUR RESPONSE",
        "Provide: (1) reasoning, (2) next action",
    ]
    return "\n".join(head + [ctx.render()] + tail)
