"""Hierarchical memory for embodied task planners.

Working memory, an episodic layer of trajectory and spatial graphs, a
semantic store of experiences and utility-scored guidelines, a prompt
composer over all of them and the feedback-driven engine that updates them.
"""

from __future__ import annotations

from .composer import PromptContext, compose_context, render_planner_prompt, token_proxy
from .core import ActionRecord, AgentState, EpisodeRecord, Outcome, StepRecord, TaskQuery, TaskType, Verb
from .evolution import MemoryBundle, guided_retry, on_episode_end, on_step
from .persistence import load_snapshot, save_snapshot

__version__ = "0.1.0"

__all__ = [
    "ActionRecord",
    "AgentState",
    "EpisodeRecord",
    "MemoryBundle",
    "Outcome",
    "PromptContext",
    "StepRecord",
    "TaskQuery",
    "TaskType",
    "Verb",
    "compose_context",
    "guided_retry",
    "load_snapshot",
    "on_episode_end",
    "on_step",
    "render_planner_prompt",
    "save_snapshot",
    "token_proxy",
]
