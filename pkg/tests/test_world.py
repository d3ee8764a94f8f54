from __future__ import annotations

from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evomem.core import ActionRecord, Verb
from evomem.sim.tasks import TaskSpec, standard_suite
from evomem.sim.world import HAND, Scene, WorldState, default_scene, observe, step_env, summarize, transition


def _ws() -> WorldState:
    return WorldState.initial(default_scene(), "kitchen")


def _run(ws: WorldState, *compact: str) -> WorldState:
    for c in compact:
        ws, outcome, msg = transition(ws, ActionRecord.parse(c))
        assert outcome.success, msg
    return ws


def test_faucet_cleans_only_what_is_in_the_sink():
    in_sink = _run(_ws(), "find(fork)", "pick_up(fork)", "find(sink)", "put_down(fork)")
    assert in_sink.locations["fork"] == "sink" and "fork" in in_sink.dirty
    washed = _run(in_sink, "turn_on(faucet)")
    assert "fork" not in washed.dirty
    on_counter = _run(_ws(), "find(faucet)", "turn_on(faucet)")
    assert "faucet" in on_counter.on and "fork" in on_counter.dirty


def test_one_object_in_hand():
    ws = _run(_ws(), "find(fork)", "pick_up(fork)", "find(spoon)")
    after, outcome, _ = transition(ws, ActionRecord("pick_up", "spoon"))
    assert not outcome.success and after is ws


def test_put_down_at_a_container_goes_inside():
    ws = _run(_ws(), "find(butter_knife)", "pick_up(butter_knife)", "find(cup)", "put_down(butter_knife)")
    assert ws.locations["butter_knife"] == "cup"
    ws = _run(ws, "pick_up(cup)", "find(dining_table)", "put_down(cup)")
    assert ws.locations["cup"] == "dining_table" and ws.locations["butter_knife"] == "cup"


def test_closed_fixtures_hide_and_refuse():
    ws = _run(_ws(), "find(apple)", "pick_up(apple)", "find(fridge)")
    _, outcome, _ = transition(ws, ActionRecord("put_down", "apple"))
    assert not outcome.success
    ws = _run(ws, "open(fridge)", "put_down(apple)", "close(fridge)")
    assert ws.hidden("apple")
    _, outcome, _ = transition(ws, ActionRecord("find", "apple"))
    assert not outcome.success


def test_slicing_needs_a_knife():
    ws = _run(_ws(), "find(apple)")
    assert not transition(ws, ActionRecord("slice", "apple"))[1].success
    ws = _run(_ws(), "find(butter_knife)", "pick_up(butter_knife)", "slice(apple)")
    assert "apple" in ws.sliced


def test_summary_is_capped():
    assert len(summarize(_ws())) <= 200


def _key(ws: WorldState):
    return (tuple(sorted(ws.locations.items())), ws.dirty, ws.on, ws.room, ws.area, ws.focus)


CLEAN_FORK_ACTIONS = [
    ActionRecord.parse(a)
    for a in (
        "find(fork)", "find(sink)", "find(faucet)", "find(countertop)", "find(dining_table)",
        "pick_up(fork)", "put_down(fork)", "turn_on(faucet)", "turn_off(faucet)",
    )
]


def test_clean_fork_state_space_exhaustively():
    """Enumerate every reachable state; the faucet cleans the fork iff the fork sits in the sink."""
    start = _ws()
    seen = {_key(start): start}
    queue = deque([start])
    checked = 0
    while queue:
        ws = queue.popleft()
        for a in CLEAN_FORK_ACTIONS:
            nxt, outcome, _ = transition(ws, a)
            if a.verb is Verb.TURN_ON and outcome.success and "fork" in ws.dirty:
                assert ("fork" not in nxt.dirty) == (ws.locations["fork"] == "sink")
                checked += 1
            if _key(nxt) not in seen:
                seen[_key(nxt)] = nxt
                queue.append(nxt)
    assert len(seen) <= 200
    assert checked > 0


names = sorted(default_scene().fixtures) + sorted(default_scene().objects)
any_action = st.one_of(
    st.builds(ActionRecord, st.sampled_from([v for v in Verb if v is not Verb.MOVE]), st.sampled_from(names)),
    st.builds(ActionRecord, st.just(Verb.MOVE), st.sampled_from(list(default_scene().rooms) + [""])),
)


@settings(max_examples=200)
@given(st.lists(any_action, max_size=40))
def test_objects_are_conserved_and_hand_holds_at_most_one(actions):
    ws = _ws()
    objects = sorted(ws.locations)
    for a in actions:
        out = step_env(ws, a)
        ws = out.state
        assert sorted(ws.locations) == objects
        assert sum(1 for loc in ws.locations.values() if loc == HAND) <= 1
        for obj, loc in ws.locations.items():
            assert loc in ws.scene.fixtures or loc in ws.scene.objects or loc == HAND
            assert obj not in ws.chain(obj)
        observe(ws)


def test_scene_validation():
    data = {"scene_id": "s", "rooms": ["a"], "fixtures": {"t": {"room": "b", "area": "x"}}, "objects": {}}
    with pytest.raises(ValueError):
        Scene.from_dict(data)


def test_suite_shape():
    suite = standard_suite()
    assert len(suite.tasks) == 20 and suite.step_cap == 30
    for t in suite.tasks:
        assert TaskSpec.from_dict(t.to_dict()) == t
        ws = WorldState.initial(default_scene(), t.room)
        for g in t.goal_conditions:
            g.holds(ws)  # decidable on any state
