from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scenarios import c1_memory, c1_steps, c1_warning, golden, step

from evomem.core import ActionRecord, AgentState, Outcome, StepRecord
from evomem.errors import InvalidRecord
from evomem.working_memory import (
    EMPTY_MARKER,
    ConsistencyWarning,
    WorkingMemory,
    append_step,
    consistency_check,
    render_working_memory,
    short_term_success_rate,
)


def _records(flags: list[bool]) -> list[StepRecord]:
    return [
        StepRecord(i, ActionRecord("find", f"spot_{i % 4}"), Outcome(ok, 0.05 if ok else 0.0),
                   agent_state=AgentState(None, f"spot_{i % 4}"), timestamp=i)
        for i, ok in enumerate(flags, start=1)
    ]


@given(st.lists(st.booleans(), max_size=60), st.sampled_from([1, 3, 5, 8, 10]))
def test_window_is_the_last_capacity_records(flags, capacity):
    wm = WorkingMemory.start("kitchen", capacity)
    recs = _records(flags)
    for r in recs:
        wm = append_step(wm, r)
    assert wm.window == tuple(recs[-capacity:]) if recs else wm.window == ()
    assert wm.action_count == len(recs)
    assert wm.success_count == sum(flags)


def test_indices_must_increase():
    wm = append_step(WorkingMemory.start("kitchen"), c1_steps()[1])
    with pytest.raises(InvalidRecord):
        append_step(wm, c1_steps()[0])


def test_empty_window_rate_and_marker():
    wm = WorkingMemory.start("kitchen")
    assert short_term_success_rate(wm) == 100.0
    assert EMPTY_MARKER in render_working_memory(wm)


def test_c1_standalone_render_matches_golden():
    assert render_working_memory(c1_memory(), c1_warning()) == golden("c1_working_memory.txt")


def test_c1_counters():
    wm = c1_memory()
    assert (wm.action_count, wm.success_count) == (4, 3)
    assert short_term_success_rate(wm) == 75.0
    assert wm.visited_locations == ("kitchen", "countertop", "sink")


def test_faucet_rule_and_its_soundness_exception():
    empty = WorkingMemory.start("kitchen")
    w = consistency_check(empty, ActionRecord("turn_on", "faucet"))
    assert w is not None and w.rule_id == "faucet_without_object"
    # a successful put_down at the sink silences the rule; only the repeat rule is left
    w = consistency_check(c1_memory(), ActionRecord("turn_on", "faucet"))
    assert w.rule_id == "repeat_failed_action"
    placed = WorkingMemory.start("kitchen")
    for s in c1_steps()[:3]:
        placed = append_step(placed, s)
    assert consistency_check(placed, ActionRecord("turn_on", "faucet")) is None


def test_pickup_while_holding():
    wm = append_step(WorkingMemory.start("kitchen"), c1_steps()[0])
    w = consistency_check(wm, ActionRecord("pick_up", "butter_knife"))
    assert w.rule_id == "pickup_while_holding"
    assert "pick up the ButterKnife" in w.message
    assert "holding the Fork" in w.message


def test_repeat_failed_action():
    wm = append_step(
        WorkingMemory.start("kitchen"),
        step(1, "open", "fridge", False, 0.0, "Fridge is locked", "try", None, "fridge"),
    )
    w = consistency_check(wm, ActionRecord("open", "fridge"))
    assert w.rule_id == "repeat_failed_action"
    assert consistency_check(wm, ActionRecord("open", "cabinet")) is None


def test_putdown_while_empty():
    w = consistency_check(WorkingMemory.start("kitchen"), ActionRecord("put_down", "fork"))
    assert w.rule_id == "putdown_while_empty"


def test_warning_rule_ids_are_closed():
    with pytest.raises(ValueError):
        ConsistencyWarning("made_up", "x")


def test_compact_layout_differs_from_standalone():
    wm = c1_memory()
    text = render_working_memory(wm, compact=True)
    assert text.startswith("Working Memory (Recent Actions):")
    assert "(Step 1) Action: pick up the Fork" in text
    assert "Recently Visited" not in text


def test_dict_round_trip():
    wm = c1_memory()
    assert WorkingMemory.from_dict(wm.to_dict()) == wm
