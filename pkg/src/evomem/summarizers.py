"""Episode summarizers: the structured result type, a deterministic rule-based
implementation, and an HTTP adapter for a model endpoint that speaks the same schema.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import httpx

from .core import EpisodeRecord, StepRecord, TaskType, Verb, display_name
from .errors import EmptyEpisode, EndpointError, SchemaViolation
from .working_memory import WorkingMemory, append_step, consistency_check

log = logging.getLogger(__name__)

ANALYSIS_PROMPT = """You are an expert AI assistant analyzing robot task execution logs. Your job is to extract valuable semantic experiences from episode execution data.

Analysis Context:
- Robot operates in household environments (kitchen, living room, bedroom, bathroom)
- Tasks involve object manipulation, navigation, and complex multi-step sequences
- Robot can only hold one object at a time
- "Put down" near containers automatically places objects INSIDE containers

Your Task:
Analyze the provided episode execution log and extract:

1. Success Pattern (if episode succeeded):
  - Key successful action sequences
  - Critical decision points that led to success
  - Effective navigation patterns
  - Successful object interaction strategies
2. Failure Analysis (if episode failed):
  - Root causes of failure
  - Specific actions or decisions that led to failure
  - Alternative approaches that could have worked
  - Common mistakes to avoid
3. Learning Insights (always):
  - General principles learned from this episode
  - Room-specific strategies discovered
  - Object interaction patterns identified
  - Navigation efficiency improvements

Output Format:
Provide a JSON response with:

{
  "episode_success": true/false,
  "primary_task": "brief task description",
  "success_patterns": ["list of successful strategies"],
  "failure_causes": ["list of failure root causes"],
  "learning_insights": ["list of general insights"],
  "action_sequences": {
    "successful": ["key successful action patterns"],
    "failed": ["action patterns that failed"]
  },
  "recommendations": ["specific recommendations"]
}

Be concise but specific. Focus on actionable insights that can improve future performance."""

SUCCESS_PROMPT = """Based on the following successfully completed task information, extract key successful experiences and patterns:

Task Instruction: {instruction}
Room: {room}
Task Type: {task_type}
Action Sequence: {actions}
Number of Steps: {n_steps}

Please concisely summarize the key experiences from this success, focusing on:
1. Effective action strategies
2. Important spatial layout utilization
3. Key points in object interaction

Experience Summary (1-2 sentences):"""

FAILURE_PROMPT = """Based on the following failed task information, conduct a reflective analysis:

Task Instruction: {instruction}
Room: {room}
Task Type: {task_type}
Action Sequence: {actions}
Failure Reason: Task not completed

Please analyze the failure reasons and extract learning points:
1. Possible strategy issues
2. Areas that need improvement
3. Behaviors to avoid next time

Reflection Summary (1-2 sentences):"""

# Strategy templates the rule-based summarizer can recognise in a successful attempt.
SINK_BEFORE_FAUCET = "sink_before_faucet"
SMALL_OBJECT_FIRST = "small_object_first"
OPEN_BEFORE_PUT = "open_before_put"

GUIDELINE_TEXT = {
    SINK_BEFORE_FAUCET: "Before turning on the faucet, ensure the target object is placed in the sink.",
    SMALL_OBJECT_FIRST: "For complex placement: Pick up small object, Put into container, Pick up container, Place at target.",
    OPEN_BEFORE_PUT: "Open a closed container before putting an object inside it.",
}
GUIDELINE_TAGS = {
    SINK_BEFORE_FAUCET: ("clean",),
    SMALL_OBJECT_FIRST: ("composite", "place", "container"),
    OPEN_BEFORE_PUT: ("place", "container"),
}


@dataclass(frozen=True)
class SummaryResult:
    episode_success: bool
    primary_task: str
    success_patterns: tuple[str, ...] = ()
    failure_causes: tuple[str, ...] = ()
    learning_insights: tuple[str, ...] = ()
    successful_sequences: tuple[str, ...] = ()
    failed_sequences: tuple[str, ...] = ()
    recommendations: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_success": self.episode_success,
            "primary_task": self.primary_task,
            "success_patterns": list(self.success_patterns),
            "failure_causes": list(self.failure_causes),
            "learning_insights": list(self.learning_insights),
            "action_sequences": {
                "successful": list(self.successful_sequences),
                "failed": list(self.failed_sequences),
            },
            "recommendations": list(self.recommendations),
        }

    @classmethod
    def from_dict(cls, d: Any) -> SummaryResult:
        """Parse the structured reply, raising SchemaViolation on any deviation."""
        if not isinstance(d, dict):
            raise SchemaViolation("summary must be a JSON object")
        if not isinstance(d.get("episode_success"), bool):
            raise SchemaViolation("episode_success must be a boolean")
        if not isinstance(d.get("primary_task"), str):
            raise SchemaViolation("primary_task must be a string")
        seqs = d.get("action_sequences")
        if not isinstance(seqs, dict):
            raise SchemaViolation("action_sequences must be an object")

        def strings(value: Any, name: str) -> tuple[str, ...]:
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise SchemaViolation(f"{name} must be a list of strings")
            return tuple(value)

        return cls(
            episode_success=d["episode_success"],
            primary_task=d["primary_task"],
            success_patterns=strings(d.get("success_patterns"), "success_patterns"),
            failure_causes=strings(d.get("failure_causes"), "failure_causes"),
            learning_insights=strings(d.get("learning_insights"), "learning_insights"),
            successful_sequences=strings(seqs.get("successful"), "action_sequences.successful"),
            failed_sequences=strings(seqs.get("failed"), "action_sequences.failed"),
            recommendations=strings(d.get("recommendations"), "recommendations"),
        )


class Summarizer(Protocol):
    def analyze_episode(self, episode: EpisodeRecord) -> SummaryResult: ...

    def summarize_success(self, episode: EpisodeRecord) -> str: ...

    def summarize_failure(self, episode: EpisodeRecord) -> str: ...


def _phrases(steps: Sequence[StepRecord]) -> str:
    return "; ".join(s.action.phrase() for s in steps)


def _dedup(items: Sequence[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(i for i in items if i))


def _attempts(ep: EpisodeRecord) -> list[tuple[tuple[StepRecord, ...], bool]]:
    return [(ep.steps, ep.first_attempt_success)] + list(zip(ep.retry_trajectories, ep.retry_successes))


def detect_strategies(steps: Sequence[StepRecord], task_type: TaskType) -> list[str]:
    """Strategy templates visible in the successful steps of one attempt."""
    ok = [s for s in steps if s.outcome.success]
    found = []
    sink_put = next(
        (i for i, s in enumerate(ok) if s.action.verb is Verb.PUT_DOWN and "sink" in s.location.lower()), None
    )
    if sink_put is not None and any(
        s.action.verb is Verb.TURN_ON and s.action.target == "faucet" for s in ok[sink_put + 1 :]
    ):
        found.append(SINK_BEFORE_FAUCET)
    if task_type is TaskType.COMPOSITE:
        picks = [s.action.target for s in ok if s.action.verb is Verb.PICK_UP]
        puts = [s.action.target for s in ok if s.action.verb is Verb.PUT_DOWN]
        if len(picks) >= 2 and picks[0] != picks[1] and picks[0] in puts and picks[1] in puts:
            found.append(SMALL_OBJECT_FIRST)
    opened = False
    for s in ok:
        if s.action.verb is Verb.OPEN:
            opened = True
        elif s.action.verb is Verb.PUT_DOWN and opened:
            found.append(OPEN_BEFORE_PUT)
            break
    return found


def fired_rules(steps: Sequence[StepRecord], capacity: int = 5) -> list[str]:
    """Rule ids recorded on the steps plus those a replay of the consistency checks raises."""
    rules: list[str] = []
    location = steps[0].location if steps else ""
    wm = WorkingMemory.start(location, capacity)
    for s in steps:
        if s.consistency_warning:
            rules.append(s.consistency_warning)
        warning = consistency_check(wm, s.action)
        if warning is not None:
            rules.append(warning.rule_id)
        wm = append_step(wm, s)
    return list(dict.fromkeys(rules))


def _object_words(object_id: str) -> str:
    return object_id.replace("_", " ") if object_id else "object"


class RuleBasedSummarizer:
    """Deterministic stand-in for a model summarizer; fills fixed templates from the episode."""

    def analyze_episode(self, episode: EpisodeRecord) -> SummaryResult:
        if not episode.steps:
            raise EmptyEpisode("cannot summarize an episode without steps")
        obj = _object_words(episode.object)
        successful, failed, strategies, causes = [], [], [], []
        for steps, ok in _attempts(episode):
            if not steps:
                continue
            if ok:
                successful.append(_phrases([s for s in steps if s.outcome.success]))
                strategies += detect_strategies(steps, episode.task_type)
            else:
                failed.append(_phrases(steps[-6:]))
                last_fail = next((s for s in reversed(steps) if not s.outcome.success), None)
                if last_fail is not None:
                    causes.append(f"Last failed action: {last_fail.action.phrase()}")
                causes += fired_rules(steps)
        strategies = list(dict.fromkeys(strategies))
        patterns = []
        for st in strategies:
            if st == SINK_BEFORE_FAUCET:
                patterns.append(f"Always place the {obj} into the sink before turning on the faucet to clean it.")
            elif st == SMALL_OBJECT_FIRST:
                patterns.append("Put the small object into the container before picking up the container.")
            elif st == OPEN_BEFORE_PUT:
                patterns.append("Open the container before putting an object inside it.")
        if not patterns and successful:
            patterns.append(f"Completed with: {successful[0]}")
        if not episode.first_attempt_success and not causes:
            causes.append("Task not completed within the step limit")
        insights = [f"{episode.task_type.value} task in {episode.room} took {len(episode.steps)} steps on the first attempt."]
        insights += [f"Warning {c} preceded the failure; follow consistency warnings." for c in causes if "_" in c and " " not in c]
        if any(episode.retry_successes):
            insights.append("A guided retry recovered the task after the first attempt failed.")
        return SummaryResult(
            episode_success=episode.first_attempt_success,
            primary_task=episode.instruction,
            success_patterns=_dedup(patterns),
            failure_causes=_dedup(causes) if not episode.first_attempt_success else (),
            learning_insights=_dedup(insights),
            successful_sequences=_dedup(successful),
            failed_sequences=_dedup(failed),
            recommendations=_dedup([GUIDELINE_TEXT[s] for s in strategies]),
        )

    def summarize_success(self, episode: EpisodeRecord) -> str:
        result = self.analyze_episode(episode)
        return result.success_patterns[0] if result.success_patterns else f"Completed: {_phrases(episode.steps)}"

    def summarize_failure(self, episode: EpisodeRecord) -> str:
        """One-line reflection used as guidance for the next attempt."""
        if not episode.steps:
            raise EmptyEpisode("cannot reflect on an episode without steps")
        rules = fired_rules(episode.steps)
        name = display_name(episode.object) if episode.object else "object"
        if "faucet_without_object" in rules:
            return f"Put the {name} in the Sink before turning on the Faucet"
        if "pickup_while_holding" in rules and episode.task_type is TaskType.COMPOSITE:
            return "Pick up the small object first, put it into the container, then pick up the container"
        last_fail = next((s for s in reversed(episode.steps) if not s.outcome.success), None)
        if last_fail is not None:
            return f"Do not repeat {last_fail.action.phrase()}; try a different approach"
        return "Task not completed; try a different approach"


def build_analysis_prompt(episode: EpisodeRecord) -> str:
    return ANALYSIS_PROMPT + "\n\nEpisode Execution Log:\n" + json.dumps(episode.to_dict(), ensure_ascii=False)


def _fill(template: str, episode: EpisodeRecord) -> str:
    return template.format(
        instruction=episode.instruction,
        room=episode.room,
        task_type=episode.task_type.value,
        actions=_phrases(episode.steps),
        n_steps=len(episode.steps),
    )


def _extract_json(text: str) -> Any:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise SchemaViolation("reply contains no JSON object")
    try:
        return json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"reply is not valid JSON: {exc}") from None


class HttpSummarizer:
    """Posts the analysis prompts to an endpoint and parses the structured reply.

    The endpoint receives ``{"kind": ..., "prompt": ...}`` and answers with
    either the summary object itself or ``{"content": "<text>"}``.
    """

    def __init__(self, url: str, timeout_ms: int = 30000, client: httpx.Client | None = None) -> None:
        self.url = url
        self.client = client or httpx.Client(timeout=timeout_ms / 1000)

    def _post(self, kind: str, prompt: str) -> Any:
        try:
            response = self.client.post(self.url, json={"kind": kind, "prompt": prompt})
            response.raise_for_status()
            return response.json()
        except httpx.HTTPError as exc:
            raise EndpointError(f"summarizer endpoint failed: {exc}") from exc
        except ValueError as exc:
            raise SchemaViolation(f"endpoint reply is not JSON: {exc}") from exc

    @staticmethod
    def _content(reply: Any) -> Any:
        if isinstance(reply, dict) and "content" in reply and isinstance(reply["content"], str):
            return reply["content"]
        return reply

    def analyze_episode(self, episode: EpisodeRecord) -> SummaryResult:
        if not episode.steps:
            raise EmptyEpisode("cannot summarize an episode without steps")
        prompt = build_analysis_prompt(episode)
        last: SchemaViolation | None = None
        for attempt in range(2):
            body = self._content(self._post("analysis", prompt))
            try:
                return SummaryResult.from_dict(_extract_json(body) if isinstance(body, str) else body)
            except SchemaViolation as exc:
                log.warning("schema-invalid summary (attempt %d): %s", attempt + 1, exc)
                last = exc
        assert last is not None
        raise last

    def _text(self, kind: str, prompt: str) -> str:
        body = self._content(self._post(kind, prompt))
        if not isinstance(body, str):
            raise SchemaViolation(f"{kind} reply must be text")
        return body.strip()

    def summarize_success(self, episode: EpisodeRecord) -> str:
        return self._text("success", _fill(SUCCESS_PROMPT, episode))

    def summarize_failure(self, episode: EpisodeRecord) -> str:
        return self._text("failure", _fill(FAILURE_PROMPT, episode))
