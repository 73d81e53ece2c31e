import json
import time

import numpy as np
import pytest

from symbiotic_ran.consensus import ConfidenceInterval, JitterSpec
from symbiotic_ran.llm import ScriptedBackend, build_backend
from symbiotic_ran.negotiation import (AgentSpec, DemandError, NegotiationConfig, NegotiationError,
                                       NegotiationState, NegotiationTranscript, RoundRecord, SlaProposal,
                                       extract_initial_demands, guardrail_bounds, reference_interval,
                                       run_negotiation, run_round, score_numeric)
from symbiotic_ran.prompts import render_guardrail


def _agents(demands, backend):
    return [AgentSpec(f"t{k}", f"I need {d} Mbps.", backend, d) for k, d in enumerate(demands)]


def _cfg(demands=(10, 50, 100), backend="cooperative", **kw):
    kw.setdefault("jitter", JitterSpec(seed=0))
    kw.setdefault("problem", {"x_target": 55.0})
    return NegotiationConfig(_agents(demands, backend), **kw)


def _ci(lo, hi):
    mean = (lo + hi) / 2
    return ConfidenceInterval(mean, (hi - lo) / 2, lo, hi, 100, 1.0)


def test_demands_from_json_and_prose():
    ds = extract_initial_demands(['{"throughput": 10}', '{"throughput": 90}'])
    assert ds.tolist() == [10.0, 90.0]
    ds = extract_initial_demands(['Reasoning: I want a lot. {"throughput": 50}',
                                  AgentSpec("a", "My camera feed needs 25 Mbps.")])
    assert ds.tolist() == [50.0, 25.0]


def test_demand_errors_name_the_agent():
    with pytest.raises(DemandError) as info:
        extract_initial_demands(['{"throughput": -5}'], ids=["alice"])
    assert info.value.agent_id == "alice"
    with pytest.raises(DemandError) as info:
        extract_initial_demands([AgentSpec("bob", "no number here")])
    assert info.value.agent_id == "bob"


def test_guardrail_fragment():
    assert "between: 55-65 Mbps" in render_guardrail(_ci(55.0, 65.0))
    assert "between: 55-66 Mbps" in render_guardrail(_ci(55.4, 65.2))
    assert "between: 60-60 Mbps" in render_guardrail(_ci(60.0, 60.0))
    assert render_guardrail(None) == ""
    assert guardrail_bounds(_ci(55.4, 65.2)) == (55, 66)


def test_proposal_validation():
    with pytest.raises(ValueError):
        SlaProposal("a", 1, 120.0, "too much")
    with pytest.raises(ValueError):
        SlaProposal("a", 1, 50.0, "  ")


def test_config_validation():
    with pytest.raises(ValueError):
        NegotiationConfig(_agents([10], "cooperative"))
    with pytest.raises(ValueError):
        _cfg(max_rounds=0)
    with pytest.raises(ValueError):
        NegotiationConfig(_agents([10, 20], "cooperative") + [AgentSpec("t0", "dup")])


def test_bid_outside_guardrail_is_flagged():
    cfg = _cfg((80, 60), "greedy", guardrail=_ci(55.0, 65.0))
    state = NegotiationState(np.array([80.0, 60.0]), cfg.guardrail)
    state.backends = {a.id: build_backend("greedy") for a in cfg.agents}
    state.backends["mediator"] = build_backend("midpoint-mediator")
    rec = run_round(cfg, state)
    flags = {p.agent_id: p.within_guardrail for p in rec.proposals}
    assert flags == {"t0": False, "t1": True}
    assert "trade-off" in rec.proposals[0].reasoning
    assert rec.mediator.throughput == 60.0


def test_cooperative_fixed_point():
    tr = run_negotiation(_cfg())
    assert tr.outcome == "consensus" and len(tr.rounds) == 2
    lo, hi = guardrail_bounds(tr.guardrail)
    assert tr.consensus == (lo + hi) // 2
    assert all(p.throughput == tr.rounds[0].mediator.throughput for p in tr.rounds[1].proposals)


def test_compliant_bids_stay_inside():
    tr = run_negotiation(_cfg(backend={"kind": "scripted", "name": "compliant"}))
    lo, hi = guardrail_bounds(tr.guardrail)
    for r in tr.rounds:
        for p in r.proposals:
            assert lo <= p.throughput <= hi and p.within_guardrail


def test_forced_timeout():
    tr = run_negotiation(_cfg(backend="greedy", use_guardrail=False, max_rounds=1))
    assert tr.outcome == "timeout" and tr.consensus is None and len(tr.rounds) == 1


def test_consensus_round_has_small_spread():
    tr = run_negotiation(_cfg(backend={"kind": "scripted", "name": "compliant"}))
    assert tr.rounds[-1].spread < 2.0
    assert [r.index for r in tr.rounds] == list(range(1, len(tr.rounds) + 1))


def test_abstention_and_all_abstain():
    def flaky(prompt, ctx):
        if ctx["agent_id"] == "t1":
            raise ConnectionError("down")
        return json.dumps({"throughput": 50})
    cfg = _cfg((40, 60), ScriptedBackend(flaky), use_guardrail=False, max_rounds=2)
    tr = run_negotiation(cfg)
    assert "t1" in tr.rounds[0].abstained
    assert [p.agent_id for p in tr.rounds[0].proposals] == ["t0"]

    cfg = _cfg((40, 60), ScriptedBackend(lambda p, c: "no json"), use_guardrail=False)
    with pytest.raises(NegotiationError):
        run_negotiation(cfg)


def test_tenants_are_queried_concurrently():
    def slow(prompt, ctx):
        time.sleep(0.1)
        return json.dumps({"throughput": 50})
    cfg = _cfg((50,) * 8, ScriptedBackend(slow), use_guardrail=False, max_rounds=1)
    t0 = time.perf_counter()
    run_negotiation(cfg)
    assert time.perf_counter() - t0 < 0.5


def test_prompts_carry_history_and_guardrail():
    seen = []

    def spy(prompt, ctx):
        seen.append((ctx["round"], prompt))
        return json.dumps({"throughput": 55})
    run_negotiation(_cfg((50, 60), ScriptedBackend(spy), guardrail=_ci(55.0, 65.0), max_rounds=2,
                         epsilon=0.1))
    first = [p for r, p in seen if r == 1]
    second = [p for r, p in seen if r == 2]
    assert all("between: 55-65 Mbps" in p for p in first)
    assert all("Round 1:" in p for p in second)


def test_score_numeric():
    tr = NegotiationTranscript([], None, None, None, [], 0.0)
    with pytest.raises(ValueError):
        score_numeric(tr, 55.0)
    r = RoundRecord(1, [SlaProposal("a", 1, 50.0, "x"), SlaProposal("b", 1, 60.0, "y")], None)
    assert score_numeric(NegotiationTranscript([r], None, None, None, [], 0.0), 55.0).mae == 5.0
    r = RoundRecord(1, [SlaProposal("a", 1, 55.0, "x")], None)
    assert score_numeric(NegotiationTranscript([r], None, None, None, [], 0.0), 55.0).mae == 0.0


def test_guardrail_reduces_error():
    greedy = score_numeric(run_negotiation(_cfg(backend="greedy", use_guardrail=False)))
    railed = score_numeric(run_negotiation(_cfg(backend={"kind": "scripted", "name": "compliant"})))
    assert railed.mae < greedy.mae


def test_rounds_do_not_grow_with_agents():
    rounds = [len(run_negotiation(_cfg(np.linspace(10, 100, n))).rounds) for n in (2, 5, 10, 20)]
    assert all(b <= a for a, b in zip(rounds, rounds[1:]))
    assert max(rounds) <= 5


def test_transcript_round_trip(tmp_path):
    tr = run_negotiation(_cfg(backend={"kind": "scripted", "name": "compliant"}))
    path = tmp_path / "game.jsonl"
    tr.save(path)
    back = NegotiationTranscript.load(path)
    assert back.lines() == tr.lines()
    assert back.consensus == tr.consensus


def test_transcripts_are_deterministic():
    a = run_negotiation(_cfg(np.linspace(10, 100, 12), {"kind": "scripted", "name": "compliant"}))
    b = run_negotiation(_cfg(np.linspace(10, 100, 12), {"kind": "scripted", "name": "compliant"}))
    assert a.lines() == b.lines()


def test_recompute_each_round_updates_guardrail():
    cfg = _cfg(backend="greedy", recompute_each_round=True, max_rounds=3)
    tr = run_negotiation(cfg)
    assert len(tr.rounds) == 3
    expected = guardrail_bounds(reference_interval(cfg, tr.rounds[1].bids()))
    assert tr.rounds[2].guardrail == expected
    assert tr.rounds[0].guardrail == guardrail_bounds(tr.reference)
