from __future__ import annotations

import json
import random

import pytest
from bundles import random_bundle
from scenarios import b13_spatial, c3_store, play_clean_fork

from evomem.errors import DigestMismatch, InvariantViolation, IoFailure, SnapshotError, VersionUnsupported
from evomem.evolution import MemoryBundle, on_episode_end
from evomem.persistence import bundle_to_dict, dumps, load_snapshot, loads, reseal, save_snapshot
from evomem.semantic import utility
from evomem.summarizers import RuleBasedSummarizer


def test_empty_bundle_snapshot(tmp_path):
    snap = save_snapshot(MemoryBundle(), tmp_path / "m.json")
    assert snap.format_version == 1 and snap.episode_counter == 0
    assert snap.sections["spatial_kg"] == {"facts": []}
    assert load_snapshot(tmp_path / "m.json") == MemoryBundle()


@pytest.mark.parametrize("seed", range(20))
def test_round_trip_is_deep_equal_and_byte_stable(seed, tmp_path):
    mb = random_bundle(random.Random(seed))
    path = tmp_path / "m.json"
    save_snapshot(mb, path)
    again = load_snapshot(path)
    assert again == mb
    assert dumps(again) == path.read_text(encoding="utf-8")


def test_clean_fork_episode_chain_is_saved(tmp_path):
    mb = MemoryBundle()
    on_episode_end(mb, play_clean_fork(mb), RuleBasedSummarizer())
    snap = save_snapshot(mb, tmp_path / "m.json")
    assert [n["state_id"] for n in snap.sections["trajectory_kg"]["nodes"]] == [f"s_00{i}" for i in range(5)]


def test_unwritable_and_missing_paths(tmp_path):
    with pytest.raises(IoFailure):
        save_snapshot(MemoryBundle(), tmp_path / "no" / "such" / "dir" / "m.json")
    with pytest.raises(IoFailure):
        load_snapshot(tmp_path / "absent.json")


def _doc(mb: MemoryBundle) -> dict:
    return bundle_to_dict(mb)


def test_tampering_is_detected():
    doc = _doc(MemoryBundle(skg=b13_spatial()))
    doc["sections"]["spatial_kg"]["facts"][0]["support_count"] = 99
    with pytest.raises(DigestMismatch):
        loads(json.dumps(doc))


def test_negative_support_is_an_invariant_violation():
    doc = _doc(MemoryBundle(skg=b13_spatial()))
    doc["sections"]["spatial_kg"]["facts"][0]["support_count"] = -1
    with pytest.raises(InvariantViolation):
        loads(json.dumps(reseal(doc)))


def test_version_gate():
    doc = _doc(MemoryBundle())
    doc["format_version"] = 2
    with pytest.raises(VersionUnsupported):
        loads(json.dumps(reseal(doc)))


def test_garbage_is_refused():
    with pytest.raises(SnapshotError):
        loads("not json")
    with pytest.raises(InvariantViolation):
        loads(json.dumps({"format_version": 1}))


def test_stale_utility_is_recomputed_on_load():
    mb = MemoryBundle(sem=c3_store())
    doc = _doc(mb)
    g = next(g for g in doc["sections"]["semantic_memory"]["guidelines"] if g["success_count"] == 12)
    g["utility_score"] = 0.91
    loaded = loads(json.dumps(reseal(doc)))
    fixed = next(x for x in loaded.sem.guidelines if x.n_success == 12)
    assert round(utility(fixed), 4) == 0.9
    assert next(x for x in _doc(loaded)["sections"]["semantic_memory"]["guidelines"]
                if x["success_count"] == 12)["utility_score"] == 0.9
