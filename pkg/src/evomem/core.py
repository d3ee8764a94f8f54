"""Shared domain vocabulary: actions, outcomes, agent state, queries and episodes.

Every type here is an immutable value object. Serialization goes through
``to_dict``/``from_dict`` pairs that use the stored-record field names
(``step_index``, ``action``, ``feedback``, ...) and through the JSON-lines
helpers at the bottom of the module.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .errors import (
    FailureWithReward,
    InvalidAction,
    InvalidRecord,
    InvalidVerb,
    MultipleHeldObjects,
    NegativeReward,
)

OBSERVATION_SOFT_CAP = 200


class Verb(str, Enum):
    FIND = "find"
    PICK_UP = "pick_up"
    PUT_DOWN = "put_down"
    TURN_ON = "turn_on"
    TURN_OFF = "turn_off"
    OPEN = "open"
    CLOSE = "close"
    SLICE = "slice"
    MOVE = "move"


class TaskType(str, Enum):
    CLEAN = "clean"
    PLACE = "place"
    HEAT = "heat"
    COOL = "cool"
    SLICE = "slice"
    TOGGLE = "toggle"
    NAVIGATE = "navigate"
    COMPOSITE = "composite"


_VERB_PHRASES = {
    Verb.FIND: "find a {}",
    Verb.PICK_UP: "pick up the {}",
    Verb.PUT_DOWN: "put down the {}",
    Verb.TURN_ON: "turn on the {}",
    Verb.TURN_OFF: "turn off the {}",
    Verb.OPEN: "open the {}",
    Verb.CLOSE: "close the {}",
    Verb.SLICE: "slice the {}",
    Verb.MOVE: "move to the {}",
}

_COMPACT_RE = re.compile(r"^([a-z_]+)\(([^()]*)\)$")


def display_name(object_id: str) -> str:
    """``butter_knife`` -> ``ButterKnife``; the capitalised form used in prompts."""
    return "".join(part[:1].upper() + part[1:] for part in object_id.split("_") if part)


def _coerce_verb(verb: Verb | str) -> Verb:
    if isinstance(verb, Verb):
        return verb
    try:
        return Verb(str(verb))
    except ValueError:
        raise InvalidVerb(f"unknown action verb {verb!r}") from None


@dataclass(frozen=True)
class ActionRecord:
    verb: Verb
    target: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "verb", _coerce_verb(self.verb))
        object.__setattr__(self, "target", (self.target or "").strip())
        if not self.target and self.verb is not Verb.MOVE:
            raise InvalidAction(f"{self.verb.value} needs a target object")

    def phrase(self) -> str:
        """Natural-language form, e.g. ``pick up the Fork`` or ``find a Sink``."""
        if self.verb is Verb.MOVE and not self.target:
            return "move ahead"
        return _VERB_PHRASES[self.verb].format(display_name(self.target))

    def compact(self) -> str:
        return f"{self.verb.value}({self.target})"

    @classmethod
    def parse(cls, text: str) -> ActionRecord:
        m = _COMPACT_RE.match(text.strip())
        if not m:
            raise InvalidAction(f"cannot parse action {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return self.compact()


@dataclass(frozen=True)
class Outcome:
    success: bool
    reward: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "reward", float(self.reward))
        if self.reward < 0:
            raise NegativeReward(f"reward must be >= 0, got {self.reward}")
        if not self.success and self.reward != 0:
            raise FailureWithReward(f"a failed action cannot carry reward {self.reward}")

    @property
    def feedback(self) -> str:
        return "success" if self.success else "failure"


@dataclass(frozen=True)
class AgentState:
    holding: str | None = None
    location: str = ""

    def __post_init__(self) -> None:
        holding = self.holding
        if isinstance(holding, (list, tuple, set, frozenset)):
            items = [h for h in holding if h]
            if len(items) > 1:
                raise MultipleHeldObjects(f"agent holds {len(items)} objects: {sorted(items)}")
            holding = items[0] if items else None
        object.__setattr__(self, "holding", holding or None)


@dataclass(frozen=True)
class StepRecord:
    """One executed action with its feedback, agent state, location and timestamp.

    ``consistency_warning`` holds the rule id of the advisory warning that was
    visible to the planner when it picked this action, if any.
    """

    step_index: int
    action: ActionRecord
    outcome: Outcome
    reasoning: str = ""
    observation_summary: str = ""
    agent_state: AgentState = field(default_factory=AgentState)
    timestamp: int = 0
    consistency_warning: str | None = None

    @property
    def location(self) -> str:
        return self.agent_state.location

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "action": self.action.compact(),
            "feedback": self.outcome.feedback,
            "reward": self.outcome.reward,
            "reasoning": self.reasoning,
            "observation_summary": self.observation_summary,
            "agent_state": {"holding": self.agent_state.holding},
            "location": self.agent_state.location,
            "timestamp": self.timestamp,
            "consistency_warning": self.consistency_warning,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> StepRecord:
        feedback = d["feedback"]
        if feedback not in ("success", "failure"):
            raise InvalidRecord(f"feedback must be success or failure, got {feedback!r}")
        return cls(
            step_index=int(d["step_index"]),
            action=ActionRecord.parse(d["action"]),
            outcome=Outcome(feedback == "success", d.get("reward", 0.0)),
            reasoning=d.get("reasoning", ""),
            observation_summary=d.get("observation_summary", ""),
            agent_state=AgentState(d.get("agent_state", {}).get("holding"), d.get("location", "")),
            timestamp=int(d.get("timestamp", 0)),
            consistency_warning=d.get("consistency_warning"),
        )


def validate_step(record: StepRecord) -> StepRecord:
    """Return ``record`` unchanged if every type invariant holds, raise otherwise."""
    if not isinstance(record.action, ActionRecord):
        raise InvalidVerb(f"action must be an ActionRecord, got {record.action!r}")
    _coerce_verb(record.action.verb)
    if record.outcome.reward < 0:
        raise NegativeReward(f"reward must be >= 0, got {record.outcome.reward}")
    if not record.outcome.success and record.outcome.reward != 0:
        raise FailureWithReward(f"a failed action cannot carry reward {record.outcome.reward}")
    if isinstance(record.agent_state.holding, (list, tuple, set, frozenset)):
        raise MultipleHeldObjects("agent_state.holding must be a single object id")
    if record.step_index < 1:
        raise InvalidRecord(f"step_index must be positive, got {record.step_index}")
    return record


@dataclass(frozen=True)
class TaskQuery:
    room: str
    task_type: TaskType
    object: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        if not self.room or not self.object:
            raise ValueError("TaskQuery needs room, task_type and object")


def _check_indices(steps: Sequence[StepRecord], what: str) -> None:
    for expected, step in enumerate(steps, start=1):
        if step.step_index != expected:
            raise InvalidRecord(f"{what}: step indices must run 1..n, found {step.step_index} at position {expected}")


@dataclass(frozen=True)
class EpisodeRecord:
    instruction: str
    room: str
    task_type: TaskType
    steps: tuple[StepRecord, ...]
    first_attempt_success: bool
    retry_trajectories: tuple[tuple[StepRecord, ...], ...] = ()
    timestamp: int = 0
    object: str = ""
    scene_id: str = ""
    retry_successes: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "retry_trajectories", tuple(tuple(t) for t in self.retry_trajectories))
        successes = tuple(bool(x) for x in self.retry_successes)
        if len(successes) < len(self.retry_trajectories):
            successes += (False,) * (len(self.retry_trajectories) - len(successes))
        if len(successes) != len(self.retry_trajectories):
            raise InvalidRecord("retry_successes must align with retry_trajectories")
        object.__setattr__(self, "retry_successes", successes)
        _check_indices(self.steps, "steps")
        for i, traj in enumerate(self.retry_trajectories):
            _check_indices(traj, f"retry {i + 1}")

    def with_retry(self, trajectory: Iterable[StepRecord], success: bool = False) -> EpisodeRecord:
        """A copy with one more retry trajectory; the first-attempt flag is carried over untouched."""
        return replace(
            self,
            retry_trajectories=self.retry_trajectories + (tuple(trajectory),),
            retry_successes=self.retry_successes + (bool(success),),
        )

    @property
    def eventual_success(self) -> bool:
        """True when the first attempt or any retry reached the goal."""
        return self.first_attempt_success or any(self.retry_successes)

    @property
    def action_sequence(self) -> tuple[ActionRecord, ...]:
        return tuple(s.action for s in self.steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "instruction": self.instruction,
            "room": self.room,
            "task_type": self.task_type.value,
            "object": self.object,
            "scene_id": self.scene_id,
            "timestamp": self.timestamp,
            "first_attempt_success": self.first_attempt_success,
            "steps": [s.to_dict() for s in self.steps],
            "retry_trajectories": [[s.to_dict() for s in t] for t in self.retry_trajectories],
            "retry_successes": list(self.retry_successes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EpisodeRecord:
        return cls(
            instruction=d["instruction"],
            room=d["room"],
            task_type=TaskType(d["task_type"]),
            steps=tuple(StepRecord.from_dict(s) for s in d["steps"]),
            first_attempt_success=bool(d["first_attempt_success"]),
            retry_trajectories=tuple(tuple(StepRecord.from_dict(s) for s in t) for t in d.get("retry_trajectories", [])),
            timestamp=int(d.get("timestamp", 0)),
            object=d.get("object", ""),
            scene_id=d.get("scene_id", ""),
            retry_successes=tuple(d.get("retry_successes", ())),
        )


# Keyword fallback for free-text instructions. "place" is implied by most
# household instructions, so it only wins when nothing more specific matches.
TASK_KEYWORDS: dict[TaskType, tuple[str, ...]] = {
    TaskType.CLEAN: ("clean", "rinse", "wash", "wet"),
    TaskType.HEAT: ("heat", "warm", "microwave", "cook"),
    TaskType.COOL: ("cool", "chill", "refrigerate"),
    TaskType.SLICE: ("slice", "cut"),
    TaskType.TOGGLE: ("turn on", "turn off", "switch on", "switch off", "toggle"),
    TaskType.PLACE: ("put", "place", "set", "leave", "bring"),
}


def _keyword_hit(keyword: str, text: str) -> bool:
    return re.search(r"\b" + re.escape(keyword) + r"\w*", text) is not None


def derive_task_type(instruction: str) -> TaskType:
    """Guess a task type from free text.

    Two or more specific categories give ``composite``; no match at all gives
    ``navigate``.
    """
    if not instruction or not instruction.strip():
        raise ValueError("instruction must be non-empty")
    text = instruction.lower()
    matched = [t for t, words in TASK_KEYWORDS.items() if any(_keyword_hit(w, text) for w in words)]
    specific = [t for t in matched if t is not TaskType.PLACE]
    if len(specific) >= 2:
        return TaskType.COMPOSITE
    if specific:
        return specific[0]
    if matched:
        return TaskType.PLACE
    return TaskType.NAVIGATE


def dump_jsonl(records: Iterable[Any], path: str | Path, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for rec in records:
            payload = rec.to_dict() if hasattr(rec, "to_dict") else rec
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
