"""Task specifications and suite files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from ..core import TaskQuery, TaskType
from .world import Goal

TEMPLATES = ("clean_and_place", "place_in_container", "toggle_target", "composite_two_object")

_TASK_TYPES = {
    "clean_and_place": TaskType.CLEAN,
    "place_in_container": TaskType.PLACE,
    "toggle_target": TaskType.TOGGLE,
    "composite_two_object": TaskType.COMPOSITE,
}


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    template: str
    instruction: str
    room: str
    object: str
    target: str | None = None
    container: str | None = None
    family: str = ""
    difficulty: str = "base"

    def __post_init__(self) -> None:
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown task template {self.template!r}")
        if self.template == "composite_two_object" and (not self.container or not self.target):
            raise ValueError("composite tasks need a container and a target")
        if self.template == "place_in_container" and not self.target:
            raise ValueError("placement tasks need a target")
        if self.difficulty not in ("base", "long"):
            raise ValueError(f"unknown difficulty {self.difficulty!r}")

    @property
    def task_type(self) -> TaskType:
        return _TASK_TYPES[self.template]

    @property
    def query(self) -> TaskQuery:
        return TaskQuery(self.room, self.task_type, self.object)

    @property
    def goal_conditions(self) -> tuple[Goal, ...]:
        if self.template == "clean_and_place":
            goals = [Goal("clean", self.object)]
            if self.target:
                goals.append(Goal("at", self.object, self.target))
            return tuple(goals)
        if self.template == "place_in_container":
            return (Goal("at", self.object, self.target),)
        if self.template == "toggle_target":
            return (Goal("is_on", self.object),)
        return (Goal("at", self.object, self.container), Goal("at", self.container, self.target))

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "family": self.family,
            "template": self.template,
            "instruction": self.instruction,
            "room": self.room,
            "object": self.object,
            "target": self.target,
            "container": self.container,
            "difficulty": self.difficulty,
            "goal_conditions": [g.to_dict() for g in self.goal_conditions],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TaskSpec:
        template = d["template"]
        default_difficulty = "long" if template in ("clean_and_place", "composite_two_object") else "base"
        return cls(
            task_id=d["task_id"],
            template=template,
            instruction=d["instruction"],
            room=d["room"],
            object=d["object"],
            target=d.get("target"),
            container=d.get("container"),
            family=d.get("family", template),
            difficulty=d.get("difficulty", default_difficulty),
        )


@dataclass(frozen=True)
class Suite:
    name: str
    tasks: tuple[TaskSpec, ...]
    step_cap: int = 30

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Suite:
        return cls(d.get("name", "suite"), tuple(TaskSpec.from_dict(t) for t in d["tasks"]), int(d.get("step_cap", 30)))

    @classmethod
    def load(cls, path: str | Path) -> Suite:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def standard_suite() -> Suite:
    text = resources.files("evomem.data").joinpath("suites/standard.json").read_text(encoding="utf-8")
    return Suite.from_dict(json.loads(text))
