from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scenarios import C5_INSTRUCTION, c3_store, c5_query, c5_stores, golden

from evomem.composer import (
    ALL_SECTIONS,
    CONTEXT_HEADER,
    PromptContext,
    compose_context,
    confidence_percent,
    render_experiences,
    render_guidelines,
    render_planner_prompt,
    token_proxy,
)
from evomem.semantic import Guideline, SemanticStore, add_experience, retrieve_guidelines
from evomem.core import TaskType


def _c5_context() -> PromptContext:
    wm, tkg, skg, sem = c5_stores()
    return compose_context(c5_query(), wm, tkg, skg, sem, 2)


def test_c3_guidelines_match_golden():
    store = c3_store()
    assert render_guidelines(retrieve_guidelines(store, c5_query(), 0)) == golden("c3_guidelines.txt")


def test_percent_is_floored():
    g = Guideline("g", TaskType.CLEAN, "dish", "x", 12, 14, 0, 0)
    assert confidence_percent(g) == 85


@given(st.integers(1, 200).flatmap(lambda t: st.tuples(st.integers(0, t), st.just(t))))
def test_percent_oracle(pair):
    s, t = pair
    g = Guideline("g", TaskType.CLEAN, "dish", "x", s, t, 0, 0)
    assert confidence_percent(g) == (100 * s) // t


def test_c5_working_memory_block_matches_golden():
    assert _c5_context().working_memory_block == golden("c5_working_memory.txt")


def test_c5_full_prompt_matches_golden():
    assert render_planner_prompt(C5_INSTRUCTION, _c5_context()) == golden("c5_full_prompt.txt")


def test_c5_size_accounting():
    ctx = _c5_context()
    assert ctx.total_chars == len(ctx.render().encode("utf-8")) == 1667
    assert token_proxy(ctx) == 416


def test_block_order_is_fixed():
    text = _c5_context().render()
    marks = ["Valuable Guidelines", "Room Successful Patterns", "Relevant Experiences",
             "Successful actions for", "Spatial Reasoning", "Working Memory"]
    positions = [text.index(m) for m in marks]
    assert positions == sorted(positions)
    assert text.startswith(CONTEXT_HEADER)


def test_composition_is_deterministic_and_round_trips():
    a, b = _c5_context(), _c5_context()
    assert a == b
    assert PromptContext.from_dict(a.to_dict()) == a


def test_empty_sections_drop_out():
    wm, tkg, skg, sem = c5_stores()
    ctx = compose_context(c5_query(), wm, tkg, skg, sem, 2, sections=frozenset({"working_memory"}))
    assert ctx.guidelines_block == ""
    assert ctx.render() == CONTEXT_HEADER + "\n\n" + ctx.working_memory_block
    with pytest.raises(ValueError):
        compose_context(c5_query(), wm, tkg, skg, sem, 2, sections=ALL_SECTIONS | {"gossip"})


def test_prior_failures_lead_the_experiences():
    store = SemanticStore()
    add_experience(store, task_instruction="t", room_id="k", task_type="clean", success=False,
                   action_summary="a", key_failure_reasons=("Dropped it",))
    text = render_experiences(store.experiences, ["Put the Fork in the Sink before turning on the Faucet"])
    lines = text.splitlines()
    assert lines[1] == "1. Previous attempt: Put the Fork in the Sink before turning on the Faucet"
    assert lines[2] == "2. Avoid: Dropped it"


def test_token_proxy_of_text():
    assert token_proxy("abcdefgh") == 2
