"""Fixed-capacity sliding window over recent steps with consistency checks and rendering."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .core import ActionRecord, AgentState, OBSERVATION_SOFT_CAP, StepRecord, Verb, display_name, validate_step
from .errors import InvalidRecord

DEFAULT_CAPACITY = 5
EMPTY_MARKER = "(none yet)"

RULE_IDS = ("faucet_without_object", "pickup_while_holding", "repeat_failed_action", "putdown_while_empty")

KEY_GUIDELINES = (
    "Check current robot state above (what you are holding)",
    "Do not repeat failed actions immediately",
    'Trust environment feedback ("Object is in [Location]" indicates direct navigation)',
    "For cleaning: Pick up, Put in sink, Turn faucet on/off, Pick up from sink",
    "For complex placement: Pick up small object, Put in container, Pick up container, Place",
    "If stuck seeing same objects, move to different rooms",
)
# The planner-prompt layout keeps a shorter subset of the static list.
KEY_GUIDELINES_COMPACT = (KEY_GUIDELINES[0], KEY_GUIDELINES[1], KEY_GUIDELINES[3])

STRATEGY_LINE = "Strategy: Use working memory to avoid failures, apply room patterns, reference experiences."


@dataclass(frozen=True)
class ConsistencyWarning:
    rule_id: str
    message: str

    def __post_init__(self) -> None:
        if self.rule_id not in RULE_IDS:
            raise ValueError(f"unknown consistency rule {self.rule_id!r}")


@dataclass(frozen=True)
class WorkingMemory:
    window: tuple[StepRecord, ...] = ()
    capacity: int = DEFAULT_CAPACITY
    current_state: AgentState = AgentState()
    visited_locations: tuple[str, ...] = ()
    action_count: int = 0
    success_count: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if len(self.window) > self.capacity:
            raise InvalidRecord(f"window holds {len(self.window)} steps, capacity is {self.capacity}")
        if not 0 <= self.success_count <= self.action_count:
            raise InvalidRecord("success_count must lie in [0, action_count]")

    @classmethod
    def start(cls, location: str = "", capacity: int = DEFAULT_CAPACITY, holding: str | None = None) -> WorkingMemory:
        return cls(
            capacity=capacity,
            current_state=AgentState(holding, location),
            visited_locations=(location,) if location else (),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "capacity": self.capacity,
            "window": [s.to_dict() for s in self.window],
            "current_state": {"holding": self.current_state.holding, "location": self.current_state.location},
            "visited_locations": list(self.visited_locations),
            "action_count": self.action_count,
            "success_count": self.success_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> WorkingMemory:
        state = d.get("current_state", {})
        return cls(
            window=tuple(StepRecord.from_dict(s) for s in d.get("window", [])),
            capacity=int(d.get("capacity", DEFAULT_CAPACITY)),
            current_state=AgentState(state.get("holding"), state.get("location", "")),
            visited_locations=tuple(d.get("visited_locations", [])),
            action_count=int(d.get("action_count", 0)),
            success_count=int(d.get("success_count", 0)),
        )


def append_step(wm: WorkingMemory, record: StepRecord) -> WorkingMemory:
    validate_step(record)
    if wm.window and record.step_index <= wm.window[-1].step_index:
        raise InvalidRecord(
            f"step_index must increase: got {record.step_index} after {wm.window[-1].step_index}"
        )
    window = (wm.window + (record,))[-wm.capacity:]
    visited = wm.visited_locations
    loc = record.agent_state.location
    if loc and loc not in visited:
        visited = visited + (loc,)
    return replace(
        wm,
        window=window,
        current_state=record.agent_state,
        visited_locations=visited,
        action_count=wm.action_count + 1,
        success_count=wm.success_count + int(record.outcome.success),
    )


def _is_sink_location(location: str) -> bool:
    return "sink" in location.lower()


def _object_in_sink(wm: WorkingMemory) -> bool:
    return any(
        s.action.verb is Verb.PUT_DOWN and s.outcome.success and _is_sink_location(s.location)
        for s in wm.window
    )


def consistency_check(wm: WorkingMemory, proposed: ActionRecord) -> ConsistencyWarning | None:
    """Advisory check of ``proposed`` against the held object and recent history.

    Every message quotes the proposed action phrase so a consumer can match it.
    """
    holding = wm.current_state.holding
    verb, target = proposed.verb, proposed.target
    if verb is Verb.TURN_ON and target == "faucet" and holding is None and not _object_in_sink(wm):
        return ConsistencyWarning(
            "faucet_without_object",
            "Cannot turn on the Faucet - you are not holding any object. For water-based cleaning: "
            "(1) Pick up object, (2) Put in sink, (3) Turn on/off faucet. "
            "Please carefully reconsider your action choice based on recent history.",
        )
    if verb is Verb.PICK_UP and holding is not None and holding != target:
        return ConsistencyWarning(
            "pickup_while_holding",
            f"Cannot {proposed.phrase()} - you are already holding the {display_name(holding)}. "
            "If holding something and need to pick up another object, MUST put down first.",
        )
    if wm.window:
        last = wm.window[-1]
        if not last.outcome.success and last.action == proposed:
            return ConsistencyWarning(
                "repeat_failed_action",
                f"The last attempt to {proposed.phrase()} failed. Do not repeat failed actions immediately.",
            )
    if verb is Verb.PUT_DOWN and holding is None:
        return ConsistencyWarning(
            "putdown_while_empty",
            f"Cannot {proposed.phrase()} - you are not holding any object.",
        )
    return None


def short_term_success_rate(wm: WorkingMemory) -> float:
    if wm.action_count == 0:
        return 100.0
    return 100.0 * wm.success_count / wm.action_count


def _clip(text: str) -> str:
    if len(text) <= OBSERVATION_SOFT_CAP:
        return text
    return text[: OBSERVATION_SOFT_CAP - 3] + "..."


def _step_lines(step: StepRecord, compact: bool) -> list[str]:
    label = f"(Step {step.step_index})" if compact else f"Step {step.step_index}:"
    status = "Success" if step.outcome.success else "Failure"
    return [
        f"{label} Action: {step.action.phrase()} ({status}, reward={step.outcome.reward:.2f})",
        f"  Observation Summary: {_clip(step.observation_summary)}",
        f"  Reasoning: {step.reasoning}",
    ]


def render_working_memory(
    wm: WorkingMemory,
    pending_warning: ConsistencyWarning | None = None,
    *,
    compact: bool = False,
) -> str:
    """Render the window as prompt text.

    ``compact=False`` is the standalone layout with its own context header;
    ``compact=True`` is the shorter section embedded in the full planner prompt.
    """
    lines: list[str] = []
    if not compact:
        lines += ["Enhanced Memory Context:", ""]
    lines.append("Working Memory (Recent Actions):")
    if wm.window:
        for step in wm.window:
            lines += _step_lines(step, compact)
    else:
        lines.append(EMPTY_MARKER)
    lines += ["", "Key Guidelines:"]
    lines += [f"- {g}" for g in (KEY_GUIDELINES_COMPACT if compact else KEY_GUIDELINES)]
    if pending_warning is not None:
        lines += ["", f"CONSISTENCY WARNING: {pending_warning.message}"]
    if not compact:
        visited = ", ".join(wm.visited_locations) or EMPTY_MARKER
        lines += ["", f"Recently Visited Locations: {visited}"]
    holding = (wm.current_state.holding or "nothing").replace("_", "").upper()
    lines += [
        "",
        "CURRENT ROBOT STATE:",
        f"- Currently holding: {holding}",
        "- CRITICAL: Always check this before planning your next action",
    ]
    if not compact:
        lines.append("- If holding something and need to pick up another object, MUST put down first")
    lines += [
        "",
        f"Performance: Success Rate {short_term_success_rate(wm):.1f}%, Actions {wm.action_count}",
        "",
        STRATEGY_LINE,
    ]
    return "\n".join(lines)
