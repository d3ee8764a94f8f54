"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

from __future__ import annotations

import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import pytest
from bundles import random_bundle
from scenarios import (
    C5_INSTRUCTION,
    c1_memory,
    c1_warning,
    c2_query,
    c2_trajectories,
    c3_store,
    c5_query,
    c5_stores,
    golden,
)

from evomem.composer import (
    compose_context,
    render_action_hints,
    render_guidelines,
    render_planner_prompt,
    render_room_patterns,
)
from evomem.core import ActionRecord, AgentState, EpisodeRecord, Outcome, StepRecord, Verb
from evomem.episodic import TrajectoryKG, begin_episode, finalize_episode, record_transition
from evomem.evolution import MemoryBundle, guided_retry, on_episode_end, run_attempt
from evomem.persistence import bundle_to_dict, dumps, loads, reseal
from evomem.semantic import Guideline, SemanticStore, add_guideline, prune, retrieve_guidelines, utility
from evomem.sim.harness import run_episode, run_suite
from evomem.sim.planners import HouseholdEnv, MemorylessPlanner, MemoryPlanner
from evomem.sim.tasks import standard_suite
from evomem.summarizers import RuleBasedSummarizer
from evomem.working_memory import WorkingMemory, append_step, render_working_memory

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def verdict(capsys):
    """Yields a recorder; prints exactly one PASS/FAIL line when the test ends."""

    @contextmanager
    def run(number: int, title: str, budget_s: float | None = None):
        info: dict[str, str] = {}
        start = time.perf_counter()
        ok = False
        try:
            yield info
            elapsed = time.perf_counter() - start
            if budget_s is not None:
                assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            detail = info.get("detail", "")
            with capsys.disabled():
                print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({elapsed:.2f}s) {detail}".rstrip())

    return run


# oracles


def oracle_utility(s: int, t: int) -> Fraction:
    return Fraction(7, 10) * Fraction(s, t) + Fraction(3, 10) * min(Fraction(s, 10), Fraction(1))


def oracle_protected(g: Guideline) -> bool:
    return g.n_success >= 5 and Fraction(g.n_success, g.n_total) >= Fraction(4, 5)


def oracle_survivors(store: SemanticStore, now: int) -> set[str]:
    lam = Fraction(99, 100)

    def score(g: Guideline) -> Fraction:
        return Fraction(0) if g.n_total == 0 else oracle_utility(g.n_success, g.n_total) * lam ** (now - g.last_used_at)

    ranked = sorted(store.guidelines, key=lambda g: (-score(g), g.guideline_id))
    return {g.guideline_id for g in ranked[:20]} | {g.guideline_id for g in store.guidelines if oracle_protected(g)}


def graph_diff(before: dict, after: dict) -> tuple[set, dict]:
    """New node ids, and per-edge (total, success) deltas, from two serialized graphs."""
    nodes_b = {n["state_id"] for n in before["nodes"]}
    nodes_a = {n["state_id"] for n in after["nodes"]}

    def edges(d):
        return {(e["prev_state_id"], e["action"], e["next_state_id"]): (e["total_count"], e["success_count"]) for e in d["edges"]}

    eb, ea = edges(before), edges(after)
    deltas = {k: (ea[k][0] - eb.get(k, (0, 0))[0], ea[k][1] - eb.get(k, (0, 0))[1]) for k in ea}
    return nodes_a - nodes_b, {k: v for k, v in deltas.items() if v != (0, 0)}


def test_criterion_01_utility_oracle(verdict):
    with verdict(1, "utility matches exact oracle for 1 <= n_total <= 50; (12,14) -> 0.9000", 1.0) as info:
        worst = 0.0
        for t in range(1, 51):
            for s in range(t + 1):
                g = Guideline("g", "clean", "dish", "x", s, t, 0, 0)
                worst = max(worst, abs(utility(g) - float(oracle_utility(s, t))))
        assert worst <= 1e-12
        assert f"{utility(Guideline('g', 'clean', 'dish', 'x', 12, 14, 0, 0)):.4f}" == "0.9000"
        info["detail"] = f"max error {worst:.1e}"


def test_criterion_02_pruning_policy(verdict):
    with verdict(2, "prune fires iff size > 30; survivors = top-20 + protected; 1000 trials", 5.0) as info:
        protected_total = protected_kept = 0
        for trial in range(1000):
            rng = random.Random(trial)
            store = SemanticStore(cap_m=20)
            for i in range(rng.randint(21, 60)):
                t = rng.randint(0, 30)
                add_guideline(store, "clean", "dish", f"rule {i}", n_success=rng.randint(0, t), n_total=t,
                              now=rng.randint(0, 50))
            now = 50
            before = {g.guideline_id for g in store.guidelines}
            protected = {g.guideline_id for g in store.guidelines if oracle_protected(g)}
            expected = oracle_survivors(store, now) if len(before) > 30 else before
            prune(store, now)
            after = {g.guideline_id for g in store.guidelines}
            assert after == expected, f"trial {trial}"
            protected_total += len(protected)
            protected_kept += len(protected & after)
        assert protected_kept == protected_total
        info["detail"] = f"protected kept {protected_kept}/{protected_total}"


def test_criterion_03_window_semantics(verdict):
    with verdict(3, "window equals naive last-W slice for W in {1,3,5,8,10}", 1.0) as info:
        rng = random.Random(3)
        cases = 0
        for _ in range(300):
            capacity = rng.choice([1, 3, 5, 8, 10])
            wm = WorkingMemory.start("kitchen", capacity)
            naive: list[StepRecord] = []
            for i in range(1, rng.randint(0, 100) + 1):
                ok = rng.random() < 0.6
                rec = StepRecord(i, ActionRecord("find", rng.choice(["sink", "fork", "cup"])),
                                 Outcome(ok, 0.05 if ok else 0.0), agent_state=AgentState(None, "kitchen"), timestamp=i)
                wm = append_step(wm, rec)
                naive.append(rec)
                assert wm.window == tuple(naive[-capacity:])
                cases += 1
        info["detail"] = f"{cases} appends checked"


def test_criterion_04_kg_idempotence(verdict):
    with verdict(4, "replaying an episode adds 0 nodes and +1 per traversal to touched edges", 1.0) as info:
        rng = random.Random(4)
        for _ in range(200):
            kg = TrajectoryKG()
            room = rng.choice(["kitchen", "bathroom"])
            start = f"start {rng.randint(0, 2)}"
            steps = [
                (ActionRecord(rng.choice(["find", "pick_up", "put_down", "turn_on"]), rng.choice(["fork", "sink"])),
                 Outcome(True, 0.05) if rng.random() < 0.7 else Outcome(False), f"state {rng.randint(0, 5)}")
                for _ in range(rng.randint(1, 10))
            ]

            def play() -> list:
                sid = begin_episode(kg, "task", room, start)
                keys = []
                for action, outcome, summary in steps:
                    nxt = record_transition(kg, sid, action, outcome, summary, "r")
                    keys.append(((sid, action.compact(), nxt), outcome.success))
                    sid = nxt
                return keys

            play()
            before = kg.to_dict()
            keys = play()
            new_nodes, deltas = graph_diff(before, kg.to_dict())
            assert new_nodes == set()
            expected: dict = {}
            for key, ok in keys:
                total, wins = expected.get(key, (0, 0))
                expected[key] = (total + 1, wins + int(ok))
            assert deltas == expected
        info["detail"] = "200 episodes"


def test_criterion_05_golden_prompts(verdict):
    with verdict(5, "C.1, C.2, C.3 and C.5 renders are byte-identical to the transcriptions", 1.0) as info:
        checks = {
            "c1_working_memory.txt": render_working_memory(c1_memory(), c1_warning()),
            "c2_room_patterns.txt": render_room_patterns(c2_query(), c2_trajectories(), 2),
            "c2_action_hints.txt": render_action_hints(c2_trajectories(), "fork"),
            "c3_guidelines.txt": render_guidelines(retrieve_guidelines(c3_store(), c5_query(), 0)),
        }
        wm, tkg, skg, sem = c5_stores()
        ctx = compose_context(c5_query(), wm, tkg, skg, sem, 2)
        checks["c5_working_memory.txt"] = ctx.working_memory_block
        checks["c5_full_prompt.txt"] = render_planner_prompt(C5_INSTRUCTION, ctx)
        bad = [name for name, text in checks.items() if text.encode("utf-8") != golden(name).encode("utf-8")]
        assert not bad, f"mismatch: {bad}"
        info["detail"] = f"{len(checks)} files"


@pytest.fixture(scope="module")
def suite_runs():
    suite = standard_suite()
    start = time.perf_counter()
    memoryless, _ = run_suite(suite, "memoryless", 0)
    memory, _ = run_suite(suite, "memory", 0)
    return memoryless, memory, time.perf_counter() - start


def test_criterion_06_learning_effect(verdict, suite_runs):
    with verdict(6, "memory SR beats the pinned memoryless baseline by >= 30 points; monotone curve") as info:
        memoryless, memory, elapsed = suite_runs
        baseline = json.loads((FIXTURES / "memoryless_baseline.json").read_text())
        assert memoryless.success_rate == baseline["success_rate"]
        gain = memory.success_rate - baseline["success_rate"]
        assert gain >= 0.30 - 1e-9
        for family, curve in memory.learning_curve.items():
            if len(curve) >= 2:
                assert curve[1] >= curve[0], family
        assert elapsed < 30
        info["detail"] = f"SR {memoryless.success_rate:.0%} -> {memory.success_rate:.0%}"


def _faucet_run(steps) -> int:
    best = run = 0
    for s in steps:
        run = run + 1 if s.action.target == "faucet" and s.action.verb in (Verb.TURN_ON, Verb.TURN_OFF) else 0
        best = max(best, run)
    return best


def test_criterion_07_faucet_loop_and_recovery(verdict):
    with verdict(7, "memoryless loops on the faucet and fails; memory planner cleans via the sink", 5.0) as info:
        task = next(t for t in standard_suite().tasks if t.template == "clean_and_place")
        base, m0 = run_episode(HouseholdEnv(task, 0), MemorylessPlanner(), MemoryBundle(), task, 30, max_retries=0)
        assert not m0.success and _faucet_run(base.steps) >= 3
        mb = MemoryBundle()
        run_episode(HouseholdEnv(task, 0), MemoryPlanner(), mb, task, 30)  # populate the store
        assert mb.sem.guidelines
        ep, m1 = run_episode(HouseholdEnv(task, 0), MemoryPlanner(), mb, task, 30)
        seq = [s.action.compact() for s in ep.steps]
        put = seq.index(f"put_down({task.object})")
        assert m1.success and ep.steps[put].location == "sink" and seq[put + 1] == "turn_on(faucet)"
        info["detail"] = f"toggle run {_faucet_run(base.steps)}, recovered in {m1.env_steps} steps"


def test_criterion_08_step_reduction(verdict, suite_runs):
    with verdict(8, "mean env_steps on succeeded-by-both tasks: memory <= memoryless") as info:
        memoryless, memory, _ = suite_runs
        pairs = [(a["metrics"]["env_steps"], b["metrics"]["env_steps"])
                 for a, b in zip(memoryless.episodes, memory.episodes)
                 if a["metrics"]["success"] and b["metrics"]["success"]]
        assert pairs
        base = sum(p[0] for p in pairs) / len(pairs)
        mem = sum(p[1] for p in pairs) / len(pairs)
        assert mem <= base
        info["detail"] = f"{len(pairs)} tasks, {base:.2f} vs {mem:.2f}"


def test_criterion_09_token_overhead(verdict, suite_runs):
    with verdict(9, "full-memory / working-memory-only token proxy within [1.1, 2.5]") as info:
        _, memory, _ = suite_runs
        ratio = memory.total_token_proxy / memory.total_wm_only_token_proxy
        assert 1.1 <= ratio <= 2.5
        info["detail"] = f"ratio {ratio:.2f}"


def test_criterion_10_retry_isolation(verdict):
    with verdict(10, "guided retry never changes first_attempt_success (500 failing episodes)", 10.0) as info:
        rng = random.Random(10)
        tasks = standard_suite().tasks
        retried = 0
        for i in range(500):
            task = rng.choice(tasks)
            planner = rng.choice([MemoryPlanner(), MemorylessPlanner()])
            mb = MemoryBundle()
            env = HouseholdEnv(task, rng.randint(0, 3))
            first = run_attempt(env, planner, mb, task.query, step_cap=1)
            assert not first.success
            ep = EpisodeRecord(task.instruction, task.room, task.task_type, tuple(first.steps), first.success,
                               timestamp=mb.now, object=task.object)
            assert ep.first_attempt_success is False
            after = guided_retry(env, planner, mb, ep, rng.choice([0, 1, 2, 3]), query=task.query,
                                 step_cap=rng.randint(1, 12))
            assert after.first_attempt_success is False
            retried += len(after.retry_trajectories)
            on_episode_end(mb, after, RuleBasedSummarizer())
            assert mb.tkg.records[-1].success is False
        info["detail"] = f"{retried} retries run"


def test_criterion_11_persistence_round_trip(verdict):
    with verdict(11, "200 random bundles save->load->save byte-identically; stale utility recomputed", 10.0) as info:
        for seed in range(200):
            mb = random_bundle(random.Random(seed))
            text = dumps(mb)
            again = loads(text)
            assert again == mb
            assert dumps(again) == text
            doc = bundle_to_dict(mb)
            for g in doc["sections"]["semantic_memory"]["guidelines"]:
                g["utility_score"] = 0.91
            loaded = loads(json.dumps(reseal(doc)))
            for g in loaded.sem.guidelines:
                if g.n_total:
                    assert abs(utility(g) - float(oracle_utility(g.n_success, g.n_total))) < 1e-12
            assert dumps(loaded) == text
        info["detail"] = "200 bundles"
