"""Episodic memory: a Trajectory KG of state/action transitions and a Spatial KG of room/object facts.

Both graphs are mutable containers with a single writer. States are deduplicated
on the exact ``(room_id, summary)`` pair and edges on ``(prev, action, next)``.
Spatial facts carry a support count that only ever grows.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .core import ActionRecord, EpisodeRecord, Outcome, TaskQuery, TaskType
from .errors import EmptyEpisode, InvalidRecord, MalformedFact, UnknownStateNode

log = logging.getLogger(__name__)

MAX_REASONING_EXAMPLES = 3
RELATIONS = ("contains", "near", "on", "in")


@dataclass(frozen=True)
class StateNode:
    state_id: str
    room_id: str
    summary: str


@dataclass(frozen=True)
class TransitionEdge:
    prev_state_id: str
    next_state_id: str
    action: ActionRecord
    success_count: int = 0
    total_count: int = 1
    reasoning_examples: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.total_count < 1 or not 0 <= self.success_count <= self.total_count:
            raise InvalidRecord(f"edge counts out of range: {self.success_count}/{self.total_count}")

    @property
    def key(self) -> tuple[str, ActionRecord, str]:
        return (self.prev_state_id, self.action, self.next_state_id)


@dataclass(frozen=True)
class TrajectoryRecord:
    instruction: str
    action_sequence: tuple[ActionRecord, ...]
    success: bool
    room: str
    timestamp: int
    task_type: TaskType = TaskType.NAVIGATE
    object: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "instruction": self.instruction,
            "action_sequence": [a.compact() for a in self.action_sequence],
            "success": self.success,
            "room": self.room,
            "timestamp": self.timestamp,
            "task_type": self.task_type.value,
            "object": self.object,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TrajectoryRecord:
        return cls(
            instruction=d["instruction"],
            action_sequence=tuple(ActionRecord.parse(a) for a in d["action_sequence"]),
            success=bool(d["success"]),
            room=d["room"],
            timestamp=int(d["timestamp"]),
            task_type=TaskType(d.get("task_type", "navigate")),
            object=d.get("object", ""),
        )


@dataclass
class TrajectoryKG:
    nodes: dict[str, StateNode] = field(default_factory=dict)
    edges: dict[tuple[str, ActionRecord, str], TransitionEdge] = field(default_factory=dict)
    records: list[TrajectoryRecord] = field(default_factory=list)
    _node_lookup: dict[tuple[str, str], str] = field(default_factory=dict, compare=False, repr=False)
    by_task: dict[tuple[TaskType, str], list[int]] = field(default_factory=dict, compare=False, repr=False)
    by_room: dict[str, list[int]] = field(default_factory=dict, compare=False, repr=False)

    def node_for(self, room: str, summary: str) -> str:
        key = (room, summary)
        sid = self._node_lookup.get(key)
        if sid is None:
            sid = f"s_{len(self.nodes):03d}"
            self.nodes[sid] = StateNode(sid, room, summary)
            self._node_lookup[key] = sid
        return sid

    def add_record(self, record: TrajectoryRecord) -> None:
        pos = len(self.records)
        self.records.append(record)
        self.by_task.setdefault((record.task_type, record.object), []).append(pos)
        self.by_room.setdefault(record.room, []).append(pos)

    def check_invariants(self) -> None:
        lookup: dict[tuple[str, str], str] = {}
        for sid, node in self.nodes.items():
            if sid != node.state_id:
                raise InvalidRecord(f"node keyed {sid} carries id {node.state_id}")
            pair = (node.room_id, node.summary)
            if pair in lookup:
                raise InvalidRecord(f"duplicate state {pair}")
            lookup[pair] = sid
        for key, edge in self.edges.items():
            if key != edge.key:
                raise InvalidRecord(f"edge key mismatch for {key}")
            if edge.prev_state_id not in self.nodes or edge.next_state_id not in self.nodes:
                raise InvalidRecord(f"edge {key} references an unknown node")
            if len(edge.reasoning_examples) > MAX_REASONING_EXAMPLES:
                raise InvalidRecord(f"edge {key} holds too many reasoning examples")
        if lookup != self._node_lookup:
            raise InvalidRecord("node lookup index is stale")
        by_task: dict[tuple[TaskType, str], list[int]] = {}
        by_room: dict[str, list[int]] = {}
        for pos, rec in enumerate(self.records):
            by_task.setdefault((rec.task_type, rec.object), []).append(pos)
            by_room.setdefault(rec.room, []).append(pos)
        if by_task != self.by_task or by_room != self.by_room:
            raise InvalidRecord("trajectory record indices are stale")

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [{"state_id": n.state_id, "room_id": n.room_id, "summary": n.summary} for n in self.nodes.values()],
            "edges": [
                {
                    "prev_state_id": e.prev_state_id,
                    "next_state_id": e.next_state_id,
                    "action": e.action.compact(),
                    "success_count": e.success_count,
                    "total_count": e.total_count,
                    "reasoning_examples": list(e.reasoning_examples),
                }
                for e in self.edges.values()
            ],
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TrajectoryKG:
        kg = cls()
        for n in d.get("nodes", []):
            node = StateNode(n["state_id"], n["room_id"], n["summary"])
            kg.nodes[node.state_id] = node
            kg._node_lookup.setdefault((node.room_id, node.summary), node.state_id)
        for e in d.get("edges", []):
            edge = TransitionEdge(
                e["prev_state_id"],
                e["next_state_id"],
                ActionRecord.parse(e["action"]),
                int(e["success_count"]),
                int(e["total_count"]),
                tuple(e.get("reasoning_examples", ())),
            )
            kg.edges[edge.key] = edge
        for r in d.get("records", []):
            kg.add_record(TrajectoryRecord.from_dict(r))
        kg.check_invariants()
        return kg


def begin_episode(kg: TrajectoryKG, instruction: str, room: str, initial_summary: str) -> str:
    if not instruction or not room:
        raise ValueError("begin_episode needs an instruction and a room")
    return kg.node_for(room, initial_summary)


def record_transition(
    kg: TrajectoryKG,
    prev: str,
    action: ActionRecord,
    outcome: Outcome,
    next_summary: str,
    reasoning: str = "",
    room: str | None = None,
) -> str:
    """Add or aggregate the edge ``prev --action--> next`` and return the next state id.

    ``room`` defaults to the room of ``prev``.
    """
    if prev not in kg.nodes:
        raise UnknownStateNode(f"unknown state node {prev!r}")
    nxt = kg.node_for(room or kg.nodes[prev].room_id, next_summary)
    key = (prev, action, nxt)
    edge = kg.edges.get(key)
    success = int(outcome.success)
    if edge is None:
        examples = (reasoning,) if reasoning else ()
        kg.edges[key] = TransitionEdge(prev, nxt, action, success, 1, examples)
    else:
        examples = edge.reasoning_examples
        if reasoning and reasoning not in examples and len(examples) < MAX_REASONING_EXAMPLES:
            examples = examples + (reasoning,)
        kg.edges[key] = replace(
            edge,
            success_count=edge.success_count + success,
            total_count=edge.total_count + 1,
            reasoning_examples=examples,
        )
    return nxt


def finalize_episode(kg: TrajectoryKG, episode: EpisodeRecord) -> TrajectoryRecord:
    """Store the first attempt as a trajectory record; retries never enter the graph."""
    if not episode.steps:
        raise EmptyEpisode("cannot finalize an episode without steps")
    record = TrajectoryRecord(
        instruction=episode.instruction,
        action_sequence=episode.action_sequence,
        success=episode.first_attempt_success,
        room=episode.room,
        timestamp=episode.timestamp,
        task_type=episode.task_type,
        object=episode.object,
    )
    kg.add_record(record)
    return record


def _similarity(rec: TrajectoryRecord, q: TaskQuery) -> tuple[int, int, int]:
    same_type = rec.task_type == q.task_type
    return (int(same_type and rec.object == q.object), int(same_type), int(rec.room == q.room))


def query_trajectories(kg: TrajectoryKG, q: TaskQuery, k: int) -> list[TrajectoryRecord]:
    """Up to ``k`` records ranked by (exact task+object, task type, room), then success, then recency.

    Records sharing nothing with the query are left out.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for pos, rec in enumerate(kg.records):
        sim = _similarity(rec, q)
        if any(sim):
            scored.append((sim, int(rec.success), rec.timestamp, pos, rec))
    scored.sort(key=lambda t: (t[0], t[1], t[2], t[3]), reverse=True)
    return [t[-1] for t in scored[:k]]


def action_hints(kg: TrajectoryKG, object_id: str) -> list[ActionRecord]:
    """Actions of the latest successful record for ``object_id`` up to the last one touching it."""
    best: tuple[int, int] | None = None
    chosen: TrajectoryRecord | None = None
    for pos, rec in enumerate(kg.records):
        if rec.success and rec.object == object_id and (best is None or (rec.timestamp, pos) > best):
            best, chosen = (rec.timestamp, pos), rec
    if chosen is None:
        return []
    seq = list(chosen.action_sequence)
    touching = [i for i, a in enumerate(seq) if a.target == object_id]
    if touching:
        seq = seq[: touching[-1] + 1]
    hints: list[ActionRecord] = []
    for a in seq:
        if a not in hints:
            hints.append(a)
    return hints


# spatial graph


@dataclass(frozen=True)
class SpatialRelation:
    """A spatial fact without its support count; the identity used for upserts."""

    scene_id: str
    room_id: str
    source: str
    relation: str
    target: str

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise MalformedFact(f"unknown relation {self.relation!r}")
        if self.relation == "contains" and self.source != self.room_id:
            raise MalformedFact(f"contains needs the room {self.room_id!r} as source, got {self.source!r}")
        if self.relation != "contains" and self.source == self.room_id:
            raise MalformedFact(f"{self.relation} needs an object source, got the room {self.source!r}")
        if not self.scene_id or not self.target:
            raise MalformedFact("scene_id and target must be non-empty")


@dataclass(frozen=True)
class SpatialFact:
    fact: SpatialRelation
    support_count: int

    @property
    def source(self) -> str:
        return self.fact.source

    @property
    def relation(self) -> str:
        return self.fact.relation

    @property
    def target(self) -> str:
        return self.fact.target


@dataclass
class SpatialKG:
    facts: dict[SpatialRelation, int] = field(default_factory=dict)
    by_room: dict[tuple[str, str], list[SpatialRelation]] = field(default_factory=dict, compare=False, repr=False)

    def insert_if_new(self, fact: SpatialRelation) -> bool:
        if fact in self.facts:
            return False
        upsert_spatial(self, fact)
        return True

    def check_invariants(self) -> None:
        index: dict[tuple[str, str], list[SpatialRelation]] = {}
        for fact, count in self.facts.items():
            if count < 1:
                raise InvalidRecord(f"support_count must be >= 1 for {fact}")
            index.setdefault((fact.scene_id, fact.room_id), []).append(fact)
        if index != self.by_room:
            raise InvalidRecord("spatial room index is stale")

    def to_dict(self) -> dict[str, Any]:
        return {
            "facts": [
                {
                    "scene_id": f.scene_id,
                    "room_id": f.room_id,
                    "source": f.source,
                    "relation": f.relation,
                    "target": f.target,
                    "support_count": n,
                }
                for f, n in self.facts.items()
            ]
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SpatialKG:
        skg = cls()
        for item in d.get("facts", []):
            fact = SpatialRelation(item["scene_id"], item["room_id"], item["source"], item["relation"], item["target"])
            count = int(item["support_count"])
            if fact in skg.facts:
                raise InvalidRecord(f"duplicate spatial fact {fact}")
            skg.facts[fact] = count
            skg.by_room.setdefault((fact.scene_id, fact.room_id), []).append(fact)
        skg.check_invariants()
        return skg


def upsert_spatial(skg: SpatialKG, fact: SpatialRelation) -> SpatialKG:
    if fact in skg.facts:
        skg.facts[fact] += 1
    else:
        skg.facts[fact] = 1
        skg.by_room.setdefault((fact.scene_id, fact.room_id), []).append(fact)
    return skg


def query_spatial(skg: SpatialKG, scene: str, room: str) -> list[SpatialFact]:
    facts = [SpatialFact(f, skg.facts[f]) for f in skg.by_room.get((scene, room), [])]
    facts.sort(key=lambda sf: (-sf.support_count, sf.source, sf.relation, sf.target))
    return facts


def spatial_entries(skg: SpatialKG) -> list[dict[str, Any]]:
    """Group facts per (scene, room) in the stored-entry shape.

    ``objects`` lists contained objects in first-seen order, ``relations`` the
    object-object facts, and ``support_count`` the strongest support in the room.
    """
    entries = []
    for (scene, room), facts in skg.by_room.items():
        objects = [f.target for f in facts if f.relation == "contains"]
        relations = [f for f in facts if f.relation != "contains"]
        entries.append(
            {
                "scene_id": scene,
                "room_id": room,
                "objects": objects,
                "relations": [{"source": f.source, "relation": f.relation, "target": f.target} for f in relations],
                "support_count": max(skg.facts[f] for f in facts),
            }
        )
    return entries


def _dump(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False)


def render_spatial_dump(skg: SpatialKG) -> str:
    """Human-readable dump: one block per (scene, room), blocks separated by a blank line."""
    blocks = []
    for e in spatial_entries(skg):
        lines = [
            "{",
            f'  "scene_id": {_dump(e["scene_id"])},',
            f'  "room_id": {_dump(e["room_id"])},',
            f'  "objects": {_dump(e["objects"])},',
        ]
        if e["relations"]:
            lines.append('  "relations": [')
            rels = [f"    {_dump(r)}" for r in e["relations"]]
            lines.append(",\n".join(rels))
            lines.append("  ],")
        else:
            lines.append('  "relations": [],')
        lines += [f'  "support_count": {e["support_count"]}', "}"]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def render_trajectory_dump(kg: TrajectoryKG) -> str:
    return json.dumps(kg.to_dict(), indent=2, ensure_ascii=False)


def iter_relations(items: Iterable[SpatialRelation | tuple[str, str, str, str, str]]) -> list[SpatialRelation]:
    return [i if isinstance(i, SpatialRelation) else SpatialRelation(*i) for i in items]
