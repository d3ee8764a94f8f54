"""Semantic memory: distilled experiences and utility-scored guidelines.

Stored counters are always exact. Time decay is applied only when ranking, via
:func:`effective_utility`, so pruning and retrieval order can age out stale
guidelines without rewriting their statistics.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable

from .core import Outcome, TaskQuery, TaskType
from .errors import InvalidRecord, UnknownGuideline, ZeroUsage

log = logging.getLogger(__name__)

DEFAULT_CAP_M = 20
DEFAULT_SOFT_LIMIT_FACTOR = 1.5
DEFAULT_DECAY_LAMBDA = 0.99
DEFAULT_TOP_K_EXPERIENCES = 2

CONFIDENCE_WEIGHT = 0.7
USAGE_WEIGHT = 0.3
USAGE_SATURATION = 10
PROTECT_MIN_SUCCESS = 5


@lru_cache(maxsize=1)
def _category_table() -> tuple[dict[str, str], str]:
    raw = json.loads(resources.files("evomem.data").joinpath("object_categories.json").read_text(encoding="utf-8"))
    return dict(raw["categories"]), raw["default"]


def object_category(object_id: str) -> str:
    table, default = _category_table()
    return table.get(object_id, default)


@dataclass(frozen=True)
class ExperienceRecord:
    experience_id: str
    task_instruction: str
    room_id: str
    task_type: TaskType
    success: bool
    action_summary: str = ""
    key_failure_reasons: tuple[str, ...] = ()
    key_success_pattern: str = ""
    created_at: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        object.__setattr__(self, "key_failure_reasons", tuple(self.key_failure_reasons))
        if self.success and self.key_failure_reasons:
            raise InvalidRecord("a successful experience cannot list failure reasons")
        if not self.success and self.key_success_pattern:
            raise InvalidRecord("a failed experience cannot carry a success pattern")

    def to_dict(self) -> dict[str, Any]:
        return {
            "experience_id": self.experience_id,
            "task_instruction": self.task_instruction,
            "room_id": self.room_id,
            "task_type": self.task_type.value,
            "success": self.success,
            "action_summary": self.action_summary,
            "key_failure_reasons": list(self.key_failure_reasons),
            "key_success_pattern": self.key_success_pattern,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperienceRecord:
        return cls(
            experience_id=d["experience_id"],
            task_instruction=d["task_instruction"],
            room_id=d["room_id"],
            task_type=TaskType(d["task_type"]),
            success=bool(d["success"]),
            action_summary=d.get("action_summary", ""),
            key_failure_reasons=tuple(d.get("key_failure_reasons", ())),
            key_success_pattern=d.get("key_success_pattern", ""),
            created_at=int(d.get("created_at", 0)),
        )


@dataclass(frozen=True)
class Guideline:
    guideline_id: str
    task_type: TaskType
    object_category: str
    description: str
    n_success: int = 0
    n_total: int = 0
    created_at: int = 0
    last_used_at: int = 0
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        object.__setattr__(self, "tags", tuple(self.tags))
        if not 0 <= self.n_success <= self.n_total:
            raise InvalidRecord(f"{self.guideline_id}: need 0 <= n_success <= n_total, got {self.n_success}/{self.n_total}")
        if self.last_used_at < self.created_at:
            raise InvalidRecord(f"{self.guideline_id}: last_used_at precedes created_at")

    def to_dict(self) -> dict[str, Any]:
        return {
            "guideline_id": self.guideline_id,
            "task_type": self.task_type.value,
            "object_category": self.object_category,
            "description": self.description,
            "success_count": self.n_success,
            "total_usage": self.n_total,
            "utility_score": round(utility(self), 4) if self.n_total else None,
            "created_at": self.created_at,
            "last_used_at": self.last_used_at,
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Guideline:
        # utility_score is derived; it is read for nothing and recomputed on demand
        return cls(
            guideline_id=d["guideline_id"],
            task_type=TaskType(d["task_type"]),
            object_category=d["object_category"],
            description=d["description"],
            n_success=int(d["success_count"]),
            n_total=int(d["total_usage"]),
            created_at=int(d.get("created_at", 0)),
            last_used_at=int(d.get("last_used_at", 0)),
            tags=tuple(d.get("tags", ())),
        )


def confidence(g: Guideline) -> float:
    if g.n_total == 0:
        raise ZeroUsage(f"{g.guideline_id} has never been applied")
    return g.n_success / g.n_total


def usage(g: Guideline) -> float:
    return min(g.n_success / USAGE_SATURATION, 1.0)


def utility(g: Guideline) -> float:
    return CONFIDENCE_WEIGHT * confidence(g) + USAGE_WEIGHT * usage(g)


def is_protected(g: Guideline) -> bool:
    # confidence >= 0.8 checked in integers to avoid float edge cases
    return g.n_total > 0 and 5 * g.n_success >= 4 * g.n_total and g.n_success >= PROTECT_MIN_SUCCESS


def normalize_description(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().rstrip(".").lower()


@dataclass
class SemanticStore:
    experiences: list[ExperienceRecord] = field(default_factory=list)
    guidelines: list[Guideline] = field(default_factory=list)
    cap_m: int = DEFAULT_CAP_M
    soft_limit_factor: float = DEFAULT_SOFT_LIMIT_FACTOR
    decay_lambda: float = DEFAULT_DECAY_LAMBDA
    next_guideline_seq: int = 1
    next_experience_seq: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.decay_lambda <= 1:
            raise ValueError(f"decay_lambda must lie in (0, 1], got {self.decay_lambda}")
        if self.cap_m < 1 or self.soft_limit_factor < 1:
            raise ValueError("cap_m must be >= 1 and soft_limit_factor >= 1")

    def get(self, guideline_id: str) -> Guideline:
        for g in self.guidelines:
            if g.guideline_id == guideline_id:
                return g
        raise UnknownGuideline(guideline_id)

    def _put(self, g: Guideline) -> None:
        for i, old in enumerate(self.guidelines):
            if old.guideline_id == g.guideline_id:
                self.guidelines[i] = g
                return
        raise UnknownGuideline(g.guideline_id)

    def check_invariants(self) -> None:
        ids = [g.guideline_id for g in self.guidelines]
        if len(set(ids)) != len(ids):
            raise InvalidRecord("duplicate guideline ids")
        exp_ids = [e.experience_id for e in self.experiences]
        if len(set(exp_ids)) != len(exp_ids):
            raise InvalidRecord("duplicate experience ids")

    def to_dict(self) -> dict[str, Any]:
        return {
            "cap_m": self.cap_m,
            "soft_limit_factor": self.soft_limit_factor,
            "decay_lambda": self.decay_lambda,
            "next_guideline_seq": self.next_guideline_seq,
            "next_experience_seq": self.next_experience_seq,
            "experiences": [e.to_dict() for e in self.experiences],
            "guidelines": [g.to_dict() for g in self.guidelines],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SemanticStore:
        store = cls(
            experiences=[ExperienceRecord.from_dict(e) for e in d.get("experiences", [])],
            guidelines=[Guideline.from_dict(g) for g in d.get("guidelines", [])],
            cap_m=int(d.get("cap_m", DEFAULT_CAP_M)),
            soft_limit_factor=float(d.get("soft_limit_factor", DEFAULT_SOFT_LIMIT_FACTOR)),
            decay_lambda=float(d.get("decay_lambda", DEFAULT_DECAY_LAMBDA)),
            next_guideline_seq=int(d.get("next_guideline_seq", 1)),
            next_experience_seq=int(d.get("next_experience_seq", 1)),
        )
        store.check_invariants()
        return store


def effective_utility(g: Guideline, now: int, store: SemanticStore) -> float:
    age = now - g.last_used_at
    if age < 0:
        raise ValueError(f"now ({now}) precedes last use of {g.guideline_id} ({g.last_used_at})")
    return utility(g) * store.decay_lambda**age


def _rank_score(g: Guideline, now: int, store: SemanticStore) -> float:
    # never-applied guidelines rank as zero utility
    if g.n_total == 0:
        return 0.0
    return effective_utility(g, max(now, g.last_used_at), store)


def record_application(store: SemanticStore, guideline_id: str, outcome: Outcome, now: int) -> SemanticStore:
    g = store.get(guideline_id)
    store._put(
        replace(
            g,
            n_success=g.n_success + int(outcome.success),
            n_total=g.n_total + 1,
            last_used_at=max(now, g.last_used_at),
        )
    )
    return store


def prune(store: SemanticStore, now: int) -> SemanticStore:
    """Cut back to the ``cap_m`` best guidelines once the soft limit is exceeded.

    Protected guidelines always stay, so the result can exceed ``cap_m``.
    """
    n = len(store.guidelines)
    if n <= store.soft_limit_factor * store.cap_m:
        return store
    ranked = sorted(store.guidelines, key=lambda g: (-_rank_score(g, now, store), g.guideline_id))
    keep = {g.guideline_id for g in ranked[: store.cap_m]}
    keep |= {g.guideline_id for g in store.guidelines if is_protected(g)}
    dropped = [g.guideline_id for g in store.guidelines if g.guideline_id not in keep]
    store.guidelines = [g for g in store.guidelines if g.guideline_id in keep]
    log.info("pruned %d guidelines (%d -> %d)", len(dropped), n, len(store.guidelines))
    return store


def guideline_matches(g: Guideline, q: TaskQuery) -> bool:
    return g.task_type == q.task_type or q.task_type.value in g.tags or g.object_category == object_category(q.object)


def retrieve_guidelines(store: SemanticStore, q: TaskQuery, now: int) -> list[Guideline]:
    hits = [g for g in store.guidelines if guideline_matches(g, q)]
    hits.sort(key=lambda g: (-_rank_score(g, now, store), g.guideline_id))
    return hits


def retrieve_experiences(store: SemanticStore, q: TaskQuery, k: int = DEFAULT_TOP_K_EXPERIENCES) -> list[ExperienceRecord]:
    if k < 1:
        raise ValueError("k must be >= 1")
    indexed = list(enumerate(store.experiences))
    matches = [(i, e) for i, e in indexed if e.task_type == q.task_type]
    if matches:
        matches.sort(key=lambda t: (t[1].room_id == q.room, t[1].created_at, t[0]), reverse=True)
    else:
        matches = sorted(indexed, key=lambda t: (t[1].created_at, t[0]), reverse=True)
    return [e for _, e in matches[:k]]


def add_experience(
    store: SemanticStore,
    *,
    task_instruction: str,
    room_id: str,
    task_type: TaskType,
    success: bool,
    action_summary: str,
    key_failure_reasons: Iterable[str] = (),
    key_success_pattern: str = "",
    created_at: int = 0,
) -> ExperienceRecord:
    exp = ExperienceRecord(
        experience_id=f"exp_{store.next_experience_seq:03d}",
        task_instruction=task_instruction,
        room_id=room_id,
        task_type=task_type,
        success=success,
        action_summary=action_summary,
        key_failure_reasons=tuple(key_failure_reasons),
        key_success_pattern=key_success_pattern,
        created_at=created_at,
    )
    store.next_experience_seq += 1
    store.experiences.append(exp)
    return exp


def find_guideline(store: SemanticStore, task_type: TaskType, category: str, description: str) -> Guideline | None:
    key = (TaskType(task_type), category, normalize_description(description))
    for g in store.guidelines:
        if (g.task_type, g.object_category, normalize_description(g.description)) == key:
            return g
    return None


def add_guideline(
    store: SemanticStore,
    task_type: TaskType,
    category: str,
    description: str,
    *,
    n_success: int = 0,
    n_total: int = 0,
    now: int = 0,
    tags: Iterable[str] = (),
) -> Guideline:
    task_type = TaskType(task_type)
    g = Guideline(
        guideline_id=f"guide_{task_type.value}_{store.next_guideline_seq:02d}",
        task_type=task_type,
        object_category=category,
        description=description,
        n_success=n_success,
        n_total=n_total,
        created_at=now,
        last_used_at=now,
        tags=tuple(tags) or (task_type.value,),
    )
    log.debug("new guideline %s", g.guideline_id)
    store.next_guideline_seq += 1
    store.guidelines.append(g)
    return g


def upsert_guideline(
    store: SemanticStore,
    task_type: TaskType,
    category: str,
    description: str,
    outcome: Outcome,
    now: int,
    tags: Iterable[str] = (),
) -> Guideline:
    """Create a guideline, or count one more application of an existing equivalent one."""
    existing = find_guideline(store, task_type, category, description)
    if existing is not None:
        record_application(store, existing.guideline_id, outcome, now)
        return store.get(existing.guideline_id)
    return add_guideline(
        store, task_type, category, description, n_success=int(outcome.success), n_total=1, now=now, tags=tags
    )
