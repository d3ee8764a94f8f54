"""Scripted planners and the environment adapter used by the harness.

Both planners share one greedy template follower that proposes an ordered list
of candidate actions from the current observation. The memoryless planner
takes the first candidate every time. The memory planner reads the memory
blocks of its prompt context for step-order constraints and drops any
candidate named in a consistency warning.

The memoryless failure modes are constructed on purpose: the clean template
has no sink step, so it ends up toggling the faucet, and the composite
template grabs the container first and then cannot take the small object.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Sequence

from ..composer import PromptContext
from ..core import ActionRecord
from ..evolution import StepResult
from .tasks import TaskSpec
from .world import Observation, Scene, WorldState, default_scene, goal_rate, observe, step_env, summarize

SINK_BEFORE_FAUCET = "sink_before_faucet"
SMALL_OBJECT_FIRST = "small_object_first"

EVIDENCE = {
    SINK_BEFORE_FAUCET: (
        re.compile(r"sink[^.;]*before[^.;]*faucet", re.I),
        re.compile(r"before[^.;]*faucet[^.;]*sink", re.I),
        re.compile(r"find a sink; put down the", re.I),
    ),
    SMALL_OBJECT_FIRST: (re.compile(r"pick up (the )?small object", re.I),),
}
WARNING_RE = re.compile(r"^CONSISTENCY WARNING: (.*)$", re.M)

Candidate = tuple[ActionRecord, str]


def read_constraints(ctx: PromptContext) -> frozenset[str]:
    """Step-order constraints supported by the memory blocks (never the static text)."""
    memory_text = "\n".join(
        [ctx.guidelines_block, ctx.room_patterns_block, ctx.experiences_block, ctx.action_hints_block]
    )
    return frozenset(name for name, patterns in EVIDENCE.items() if any(p.search(memory_text) for p in patterns))


def read_warnings(ctx: PromptContext) -> list[str]:
    return WARNING_RE.findall(ctx.working_memory_block)


def _a(verb: str, target: str = "") -> ActionRecord:
    return ActionRecord(verb, target)


def _get(obs: Observation, obj: str) -> Candidate:
    if obs.reachable(obj):
        return _a("pick_up", obj), f"The {obj} is within reach, pick it up"
    return _a("find", obj), f"Go to the {obj}"


def _place(obs: Observation, obj: str, dest: str) -> Candidate:
    if obs.focus != dest:
        return _a("find", dest), f"Carry the {obj} to the {dest}"
    if dest in obs.openable and dest not in obs.opened:
        return _a("open", dest), f"Open the {dest} first"
    return _a("put_down", obj), f"Put the {obj} at the {dest}"


def _done() -> list[Candidate]:
    return [(_a("move"), "Goal conditions already hold")]


def candidates(obs: Observation, task: TaskSpec, constraints: frozenset[str] = frozenset()) -> list[Candidate]:
    held = obs.holding
    x = task.object
    if task.template == "toggle_target":
        if x in obs.on:
            return _done()
        if obs.reachable(x):
            return [(_a("turn_on", x), f"Switch on the {x}")]
        return [(_a("find", x), f"Go to the {x}")]

    if task.template == "place_in_container":
        if obs.positions[x] == task.target:
            return _done()
        if held == x:
            return [_place(obs, x, task.target)]
        return [_get(obs, x)]

    if task.template == "clean_and_place":
        if x in obs.dirty:
            if SINK_BEFORE_FAUCET in constraints:
                if obs.positions[x] == "sink":
                    verb = "turn_off" if "faucet" in obs.on else "turn_on"
                    return [(_a(verb, "faucet"), f"The {x} is in the sink, run the faucet")]
                if held == x:
                    return [_place(obs, x, "sink")]
                return [_get(obs, x)]
            if held == x:
                if obs.focus != "faucet":
                    return [(_a("find", "faucet"), f"Take the {x} to the faucet to wash it")]
                return [(_a("put_down", x), f"Set the {x} down by the faucet")]
            if obs.focus == "faucet":
                verb = "turn_off" if "faucet" in obs.on else "turn_on"
                return [(_a(verb, "faucet"), f"Toggle the faucet to wash the {x}"), _get(obs, x)]
            return [_get(obs, x)]
        if not task.target or obs.positions[x] == task.target:
            return _done()
        if held == x:
            return [_place(obs, x, task.target)]
        return [_get(obs, x)]

    # composite_two_object: put the small object into the container, container onto the target
    c, r = task.container, task.target
    inside = obs.positions[x] == c
    if inside:
        if obs.positions[c] == r:
            return _done()
        if held == c:
            return [_place(obs, c, r)]
        return [_get(obs, c)]
    if SMALL_OBJECT_FIRST in constraints:
        if held == x:
            return [_place(obs, x, c)]
        return [_get(obs, x)]
    if held == c:
        if obs.focus != x:
            return [(_a("find", x), f"Find the {x} to put into the {c}")]
        return [
            (_a("pick_up", x), f"Pick up the {x} for the {c}"),
            (_a("put_down", c), f"Set the {c} down to free a hand"),
        ]
    if held == x:
        return [_place(obs, x, c)]
    return [_get(obs, c)]


class MemorylessPlanner:
    uses_memory = False

    def plan(self, ctx: PromptContext | None, observation: Observation, task: TaskSpec) -> tuple[ActionRecord, str]:
        return candidates(observation, task)[0]


class MemoryPlanner:
    uses_memory = True

    def plan(self, ctx: PromptContext, observation: Observation, task: TaskSpec) -> tuple[ActionRecord, str]:
        constraints = read_constraints(ctx)
        warnings = read_warnings(ctx)
        options = candidates(observation, task, constraints)
        allowed = [c for c in options if not any(c[0].phrase() in w for w in warnings)]
        if not allowed:
            return _a("move"), "Every candidate was flagged by a consistency warning"
        action, why = allowed[0]
        if len(allowed) < len(options):
            why = f"{options[0][0].phrase()} was flagged, so: {why}"
        elif constraints:
            why = f"{why} (following {', '.join(sorted(constraints))})"
        return action, why


class ScriptedPlanner:
    """Replays a fixed action list, then moves ahead; handy for tests."""

    def __init__(self, actions: Sequence[ActionRecord], uses_memory: bool = True) -> None:
        self.actions = list(actions)
        self.uses_memory = uses_memory
        self._i = 0

    def plan(self, ctx: PromptContext | None, observation: Observation, task: TaskSpec) -> tuple[ActionRecord, str]:
        if self._i < len(self.actions):
            self._i += 1
            return self.actions[self._i - 1], "scripted"
        return _a("move"), "script exhausted"


@dataclass
class HouseholdEnv:
    """Environment handle over :mod:`world` for one task; the seed picks the start room."""

    task: TaskSpec
    seed: int = 0
    scene: Scene | None = None

    def __post_init__(self) -> None:
        self.scene = self.scene or default_scene()
        rng = random.Random(f"{self.seed}:{self.task.task_id}")
        self.start_room = rng.choice(list(self.scene.rooms))
        self.state = WorldState.initial(self.scene, self.start_room, self.seed)

    def reset(self) -> Observation:
        self.state = WorldState.initial(self.scene, self.start_room, self.seed)
        return observe(self.state)

    def initial_summary(self) -> str:
        return summarize(self.state)

    def step(self, action: ActionRecord) -> StepResult:
        out = step_env(self.state, action)
        self.state = out.state
        return StepResult(
            outcome=out.outcome,
            observation=observe(out.state, out.message),
            summary=out.summary,
            relations=out.relations,
            holding=out.state.holding,
            location=out.state.location_label,
            room=out.state.room,
            message=out.message,
        )

    def goals_met(self) -> bool:
        return all(g.holds(self.state) for g in self.task.goal_conditions)

    def goal_rate(self) -> float:
        return goal_rate(self.state, self.task.goal_conditions)
