from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evomem.core import Outcome, TaskQuery, TaskType
from evomem.errors import InvalidRecord, UnknownGuideline, ZeroUsage
from evomem.semantic import (
    Guideline,
    SemanticStore,
    add_experience,
    add_guideline,
    confidence,
    effective_utility,
    is_protected,
    object_category,
    prune,
    record_application,
    retrieve_experiences,
    retrieve_guidelines,
    upsert_guideline,
    utility,
)


def oracle_utility(s: int, t: int) -> Fraction:
    """Exact rational reference: 0.7 s/t + 0.3 min(s/10, 1)."""
    return Fraction(7, 10) * Fraction(s, t) + Fraction(3, 10) * min(Fraction(s, 10), Fraction(1))


def _g(s: int, t: int, gid: str = "guide_clean_01", last: int = 0) -> Guideline:
    return Guideline(gid, TaskType.CLEAN, "dish", "text", s, t, 0, last)


def test_utility_matches_exact_oracle_everywhere():
    for t in range(1, 51):
        for s in range(t + 1):
            assert abs(utility(_g(s, t)) - float(oracle_utility(s, t))) < 1e-12


def test_twelve_of_fourteen_is_point_nine():
    assert round(utility(_g(12, 14)), 4) == 0.9
    assert oracle_utility(12, 14) == Fraction(9, 10)


def test_zero_usage_has_no_confidence():
    with pytest.raises(ZeroUsage):
        confidence(_g(0, 0))


def test_counter_bounds():
    with pytest.raises(InvalidRecord):
        _g(5, 4)


def test_protection_threshold():
    assert is_protected(_g(5, 6))
    assert is_protected(_g(8, 10))
    assert not is_protected(_g(4, 5))  # confident but too few wins
    assert not is_protected(_g(7, 10))


def test_decay_is_geometric_in_age():
    store = SemanticStore()
    g = _g(10, 10, last=3)
    assert effective_utility(g, 3, store) == pytest.approx(1.0)
    assert effective_utility(g, 13, store) == pytest.approx(0.99**10)
    with pytest.raises(ValueError):
        effective_utility(g, 2, store)


def _random_store(rng: random.Random, n: int) -> SemanticStore:
    store = SemanticStore(cap_m=20)
    for i in range(n):
        t = rng.randint(0, 30)
        s = rng.randint(0, t)
        last = rng.randint(0, 50)
        add_guideline(store, "clean", "dish", f"rule {i}", n_success=s, n_total=t, now=last)
    return store


def oracle_survivors(store: SemanticStore, now: int) -> set[str]:
    lam = Fraction(99, 100)

    def score(g: Guideline) -> Fraction:
        return Fraction(0) if g.n_total == 0 else oracle_utility(g.n_success, g.n_total) * lam ** (now - g.last_used_at)

    ranked = sorted(store.guidelines, key=lambda g: (-score(g), g.guideline_id))
    keep = {g.guideline_id for g in ranked[:20]}
    keep |= {g.guideline_id for g in store.guidelines if g.n_success >= 5 and 5 * g.n_success >= 4 * g.n_total}
    return keep


@given(st.integers(21, 60), st.integers(0, 2**32))
def test_prune_fires_only_above_soft_limit(n, seed):
    store = _random_store(random.Random(seed), n)
    before = {g.guideline_id for g in store.guidelines}
    expected = oracle_survivors(store, 50)
    prune(store, 50)
    after = {g.guideline_id for g in store.guidelines}
    if n <= 30:
        assert after == before
    else:
        assert after == expected


def test_upsert_dedups_by_normalized_text():
    store = SemanticStore()
    a = upsert_guideline(store, "clean", "dish", "Put it in the sink.", Outcome(True, 0.1), 1)
    b = upsert_guideline(store, "clean", "dish", "put it in  the sink", Outcome(False), 2)
    assert a.guideline_id == b.guideline_id
    assert (b.n_success, b.n_total, b.last_used_at) == (1, 2, 2)
    assert len(store.guidelines) == 1


def test_record_application_unknown_id():
    with pytest.raises(UnknownGuideline):
        record_application(SemanticStore(), "guide_x_01", Outcome(True, 0.1), 1)


def test_retrieval_matches_type_tag_or_category():
    store = SemanticStore()
    add_guideline(store, "clean", "dish", "a", n_success=9, n_total=10)
    add_guideline(store, "place", "misc", "b", n_success=10, n_total=10, tags=("place", "clean"))
    add_guideline(store, "toggle", "appliance", "c", n_success=10, n_total=10)
    got = retrieve_guidelines(store, TaskQuery("kitchen", TaskType.CLEAN, "fork"), 0)
    assert [g.description for g in got] == ["b", "a"]
    assert object_category("fork") == "dish"


def test_experience_retrieval_prefers_type_then_room_then_recency():
    store = SemanticStore()
    for room, tt, ts in [("kitchen", "clean", 1), ("bathroom", "clean", 3), ("kitchen", "clean", 2), ("kitchen", "place", 9)]:
        add_experience(store, task_instruction="t", room_id=room, task_type=tt, success=True, action_summary="a", created_at=ts)
    got = retrieve_experiences(store, TaskQuery("kitchen", TaskType.CLEAN, "fork"), 2)
    assert [e.created_at for e in got] == [2, 1]
    fallback = retrieve_experiences(store, TaskQuery("kitchen", TaskType.HEAT, "mug"), 1)
    assert fallback[0].created_at == 9


def test_experience_invariants():
    with pytest.raises(InvalidRecord):
        add_experience(SemanticStore(), task_instruction="t", room_id="k", task_type="clean", success=True,
                       action_summary="a", key_failure_reasons=("x",))


def test_store_round_trip_recomputes_utility():
    store = SemanticStore()
    add_guideline(store, "clean", "dish", "a", n_success=12, n_total=14)
    d = store.to_dict()
    assert d["guidelines"][0]["utility_score"] == 0.9
    d["guidelines"][0]["utility_score"] = 0.91
    again = SemanticStore.from_dict(d)
    assert again.to_dict()["guidelines"][0]["utility_score"] == 0.9
    assert again == store
