"""Symbolic household world: scene data, immutable world states and the transition function.

Objects sit on a fixture, inside an openable fixture, inside a movable
container, or in the agent's hand. The agent stands at an *area* of a room and
faces a *focus* (the last thing it found), which is where ``put_down`` lands.
The faucet cleans whatever sits in the sink while it is running.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from ..core import ActionRecord, Outcome, Verb
from ..episodic import SpatialRelation

HAND = "hand"
ENTRANCE = "entrance"
SUMMARY_CAP = 200

REWARDS = {
    Verb.FIND: 0.05,
    Verb.PICK_UP: 0.10,
    Verb.PUT_DOWN: 0.15,
    Verb.TURN_ON: 0.10,
    Verb.TURN_OFF: 0.05,
    Verb.OPEN: 0.05,
    Verb.CLOSE: 0.05,
    Verb.SLICE: 0.10,
    Verb.MOVE: 0.05,
}
CUTTERS = ("butter_knife",)


@dataclass(frozen=True)
class Fixture:
    name: str
    room: str
    area: str
    receptacle: bool = False
    openable: bool = False
    toggleable: bool = False
    surface: str | None = None


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    at: str
    dirty: bool = False
    container: bool = False
    sliceable: bool = False


@dataclass(frozen=True)
class Scene:
    scene_id: str
    rooms: tuple[str, ...]
    fixtures: Mapping[str, Fixture]
    objects: Mapping[str, ObjectSpec]

    def __hash__(self) -> int:
        return hash(self.scene_id)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Scene:
        fixtures = {n: Fixture(n, **spec) for n, spec in d["fixtures"].items()}
        objects = {n: ObjectSpec(n, **spec) for n, spec in d["objects"].items()}
        scene = cls(d["scene_id"], tuple(d["rooms"]), fixtures, objects)
        for f in fixtures.values():
            if f.room not in scene.rooms:
                raise ValueError(f"fixture {f.name} is in unknown room {f.room}")
            if f.surface is not None and fixtures[f.surface].area != f.area:
                raise ValueError(f"surface of {f.name} must share its area")
        for o in objects.values():
            if o.at not in fixtures and o.at not in objects:
                raise ValueError(f"object {o.name} starts at unknown {o.at}")
        return scene

    @classmethod
    def load(cls, path: str | Path) -> Scene:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@lru_cache(maxsize=None)
def default_scene() -> Scene:
    text = resources.files("evomem.data").joinpath("scenes/household.json").read_text(encoding="utf-8")
    return Scene.from_dict(json.loads(text))


@dataclass(frozen=True)
class WorldState:
    scene: Scene
    locations: Mapping[str, str]
    dirty: frozenset[str]
    on: frozenset[str] = frozenset()
    opened: frozenset[str] = frozenset()
    sliced: frozenset[str] = frozenset()
    room: str = ""
    area: str = ENTRANCE
    focus: str | None = None
    rng_seed: int = 0

    @classmethod
    def initial(cls, scene: Scene, room: str, rng_seed: int = 0) -> WorldState:
        return cls(
            scene=scene,
            locations={n: o.at for n, o in scene.objects.items()},
            dirty=frozenset(n for n, o in scene.objects.items() if o.dirty),
            room=room,
            rng_seed=rng_seed,
        )

    @property
    def holding(self) -> str | None:
        held = [o for o, loc in self.locations.items() if loc == HAND]
        assert len(held) <= 1, f"agent holds {held}"
        return held[0] if held else None

    def is_fixture(self, name: str | None) -> bool:
        return name is not None and name in self.scene.fixtures

    def is_object(self, name: str | None) -> bool:
        return name is not None and name in self.scene.objects

    def chain(self, obj: str) -> list[str]:
        """Supports of ``obj`` from the nearest outwards, ending at a fixture or the hand."""
        out, cur = [], obj
        while cur in self.locations:
            cur = self.locations[cur]
            out.append(cur)
        return out

    def anchor(self, name: str) -> str:
        """The fixture (or hand) that ultimately holds ``name``; fixtures anchor themselves."""
        return name if self.is_fixture(name) else self.chain(name)[-1]

    def area_of(self, name: str) -> tuple[str, str]:
        a = self.anchor(name)
        if a == HAND:
            return self.room, self.area
        f = self.scene.fixtures[a]
        return f.room, f.area

    def hidden(self, obj: str) -> bool:
        for sup in self.chain(obj):
            if sup == HAND:
                return True
            if self.is_fixture(sup) and self.scene.fixtures[sup].openable and sup not in self.opened:
                return True
        return False

    def in_reach(self, name: str) -> bool:
        return self.area_of(name) == (self.room, self.area)

    @property
    def location_label(self) -> str:
        if self.focus is None:
            return self.room
        return self.anchor(self.focus) if self.is_object(self.focus) else self.focus

    def relation_to_support(self, obj: str) -> str:
        sup = self.locations[obj]
        if self.is_object(sup) or (self.is_fixture(sup) and (self.scene.fixtures[sup].openable or sup == "sink")):
            return "in"
        return "on"


@dataclass(frozen=True)
class Observation:
    """What a planner sees: structured state plus the last feedback message."""

    room: str
    area: str
    focus: str | None
    holding: str | None
    location: str
    positions: Mapping[str, str]
    areas: Mapping[str, tuple[str, str]]
    dirty: frozenset[str]
    on: frozenset[str]
    opened: frozenset[str]
    openable: frozenset[str]
    containers: frozenset[str]
    feedback: str = ""

    def reachable(self, name: str) -> bool:
        return self.areas.get(name) == (self.room, self.area)


def observe(ws: WorldState, feedback: str = "") -> Observation:
    names = list(ws.scene.fixtures) + list(ws.scene.objects)
    return Observation(
        room=ws.room,
        area=ws.area,
        focus=ws.focus,
        holding=ws.holding,
        location=ws.location_label,
        positions=dict(ws.locations),
        areas={n: ws.area_of(n) for n in names},
        dirty=ws.dirty,
        on=ws.on,
        opened=ws.opened,
        openable=frozenset(n for n, f in ws.scene.fixtures.items() if f.openable),
        containers=frozenset(n for n, o in ws.scene.objects.items() if o.container),
        feedback=feedback,
    )


def summarize(ws: WorldState) -> str:
    parts = [f"{ws.room}, at {ws.location_label}", f"holding {ws.holding or 'nothing'}"]
    for obj in sorted(ws.scene.objects):
        if ws.locations[obj] == HAND or ws.hidden(obj) or not ws.in_reach(obj):
            continue
        state = " (dirty)" if obj in ws.dirty else ""
        parts.append(f"{obj} {ws.relation_to_support(obj)} {ws.locations[obj]}{state}")
    running = sorted(f for f in ws.on if ws.in_reach(f))
    if running:
        parts.append("on: " + ", ".join(running))
    text = "; ".join(parts)
    return text if len(text) <= SUMMARY_CAP else text[: SUMMARY_CAP - 3] + "..."


def visible_relations(ws: WorldState) -> tuple[SpatialRelation, ...]:
    """Room-contains facts for everything visible in the room, plus local placements."""
    sid, room = ws.scene.scene_id, ws.room
    rels: list[SpatialRelation] = []
    local_fixtures = sorted(n for n, f in ws.scene.fixtures.items() if f.room == room)
    for name in local_fixtures:
        rels.append(SpatialRelation(sid, room, room, "contains", name))
    for obj in sorted(ws.scene.objects):
        if ws.hidden(obj) or ws.area_of(obj)[0] != room:
            continue
        rels.append(SpatialRelation(sid, room, room, "contains", obj))
        if ws.in_reach(obj):
            rels.append(SpatialRelation(sid, room, obj, ws.relation_to_support(obj), ws.locations[obj]))
    here = [n for n in local_fixtures if ws.scene.fixtures[n].area == ws.area]
    for i, a in enumerate(here):
        for b in here[i + 1 :]:
            rels.append(SpatialRelation(sid, room, a, "near", b))
    return tuple(rels)


def _fail(ws: WorldState, msg: str) -> tuple[WorldState, Outcome, str]:
    return ws, Outcome(False, 0.0), msg


def _apply_faucet(ws: WorldState) -> WorldState:
    if "faucet" not in ws.on:
        return ws
    washed = {o for o in ws.scene.objects if "sink" in ws.chain(o)}
    return replace(ws, dirty=ws.dirty - washed) if washed & ws.dirty else ws


def transition(ws: WorldState, action: ActionRecord) -> tuple[WorldState, Outcome, str]:
    """Pure transition; illegal actions come back as failures with an explanation."""
    verb, target = action.verb, action.target
    known = ws.is_fixture(target) or ws.is_object(target)
    ok = Outcome(True, REWARDS[verb])

    if verb is Verb.MOVE:
        if not target:
            return ws, ok, "Moved ahead"
        if target not in ws.scene.rooms:
            return _fail(ws, f"There is no room called {target}")
        return replace(ws, room=target, area=ENTRANCE, focus=None), ok, f"Entered the {target}"

    if not known:
        return _fail(ws, f"There is no {target} in this scene")

    if verb is Verb.FIND:
        if ws.is_object(target) and ws.hidden(target):
            return _fail(ws, f"Cannot see the {target}")
        room, area = ws.area_of(target)
        return replace(ws, room=room, area=area, focus=target), ok, f"Object is in {room}, at the {target}"

    if verb is Verb.PICK_UP:
        if not ws.is_object(target):
            return _fail(ws, f"The {target} cannot be picked up")
        held = ws.holding
        if held == target:
            return _fail(ws, f"Already holding the {target}")
        if held is not None:
            return _fail(ws, f"Cannot pick up the {target} while holding the {held}")
        if ws.hidden(target) or not ws.in_reach(target):
            return _fail(ws, f"The {target} is not within reach")
        support = ws.anchor(target)
        locs = dict(ws.locations)
        locs[target] = HAND
        return replace(ws, locations=locs, focus=support), ok, f"Picked up the {target}"

    if verb is Verb.PUT_DOWN:
        if ws.holding != target:
            return _fail(ws, f"Not holding the {target}")
        dest = _put_destination(ws, target)
        if dest is None:
            return _fail(ws, f"Nowhere to put the {target} here")
        locs = dict(ws.locations)
        locs[target] = dest
        nxt = _apply_faucet(replace(ws, locations=locs))
        return nxt, ok, f"Put the {target} {nxt.relation_to_support(target)} the {dest}"

    if verb in (Verb.TURN_ON, Verb.TURN_OFF):
        if not ws.is_fixture(target) or not ws.scene.fixtures[target].toggleable:
            return _fail(ws, f"The {target} cannot be switched")
        if not ws.in_reach(target):
            return _fail(ws, f"The {target} is not within reach")
        if verb is Verb.TURN_ON:
            if target in ws.on:
                return _fail(ws, f"The {target} is already on")
            nxt = _apply_faucet(replace(ws, on=ws.on | {target}))
            return nxt, ok, f"Turned on the {target}"
        if target not in ws.on:
            return _fail(ws, f"The {target} is already off")
        return replace(ws, on=ws.on - {target}), ok, f"Turned off the {target}"

    if verb in (Verb.OPEN, Verb.CLOSE):
        if not ws.is_fixture(target) or not ws.scene.fixtures[target].openable:
            return _fail(ws, f"The {target} cannot be opened")
        if not ws.in_reach(target):
            return _fail(ws, f"The {target} is not within reach")
        if verb is Verb.OPEN:
            if target in ws.opened:
                return _fail(ws, f"The {target} is already open")
            return replace(ws, opened=ws.opened | {target}), ok, f"Opened the {target}"
        if target not in ws.opened:
            return _fail(ws, f"The {target} is already closed")
        return replace(ws, opened=ws.opened - {target}), ok, f"Closed the {target}"

    # slice
    if not ws.is_object(target) or not ws.scene.objects[target].sliceable:
        return _fail(ws, f"The {target} cannot be sliced")
    if ws.holding not in CUTTERS:
        return _fail(ws, "Need a knife in hand to slice")
    if ws.hidden(target) or not ws.in_reach(target):
        return _fail(ws, f"The {target} is not within reach")
    return replace(ws, sliced=ws.sliced | {target}), ok, f"Sliced the {target}"


def _put_destination(ws: WorldState, held: str) -> str | None:
    focus = ws.focus
    if focus is None or focus == held:
        return None
    if ws.is_fixture(focus):
        f = ws.scene.fixtures[focus]
        if f.receptacle:
            return None if f.openable and focus not in ws.opened else focus
        return f.surface
    if not ws.in_reach(focus) or ws.hidden(focus) or held in ws.chain(focus):
        return None
    if ws.scene.objects[focus].container:
        return focus
    return ws.locations[focus]


@dataclass(frozen=True)
class Goal:
    kind: str  # clean | at | is_on
    obj: str
    target: str | None = None

    def holds(self, ws: WorldState) -> bool:
        if self.kind == "clean":
            return self.obj not in ws.dirty
        if self.kind == "at":
            return ws.locations.get(self.obj) == self.target
        if self.kind == "is_on":
            return self.obj in ws.on
        raise ValueError(f"unknown goal kind {self.kind}")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "obj": self.obj, "target": self.target}


def goal_rate(ws: WorldState, goals: tuple[Goal, ...]) -> float:
    if not goals:
        return 1.0
    return sum(g.holds(ws) for g in goals) / len(goals)


@dataclass(frozen=True)
class StepOutput:
    state: WorldState
    outcome: Outcome
    summary: str
    relations: tuple[SpatialRelation, ...]
    message: str = field(default="")


def step_env(ws: WorldState, action: ActionRecord) -> StepOutput:
    nxt, outcome, message = transition(ws, action)
    return StepOutput(nxt, outcome, summarize(nxt), visible_relations(nxt), message)
