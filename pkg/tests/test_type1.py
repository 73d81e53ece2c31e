import threading

import pytest

from symbiotic_ran.llm import ScriptedBackend, build_backend, echo_json
from symbiotic_ran.llm import ExtractionError
from symbiotic_ran.pcontrol import PControlConfig
from symbiotic_ran.prompts import render_kp_prompt
from symbiotic_ran.type1 import (ActionMemory, KpDecisionRequest, MetaConfig, Type1Agent,
                                 heuristic_decide, llm_decide)


def _req(kp, kpi, memory=(), target=2.0):
    return KpDecisionRequest(kp, kpi, target, tuple(memory))


def test_heuristic_cold_start_adds_initial_step():
    assert heuristic_decide(_req(0.3, 5.0)).kp == pytest.approx(0.7)


def test_heuristic_continues_when_kpi_dropped():
    d = heuristic_decide(_req(0.7, 2.5, [(0.7, 2.5), (0.3, 5.0)]))
    assert d.kp == pytest.approx(1.1)


def test_heuristic_reverses_and_halves_when_kpi_rose():
    d = heuristic_decide(_req(1.1, 4.0, [(1.1, 4.0), (0.7, 2.5)]))
    assert d.kp == pytest.approx(0.9)


def test_heuristic_clamps():
    d = heuristic_decide(_req(9.9, 5.0), kp_bounds=(0.05, 10.0))
    assert d.kp == 10.0 and d.clamped


def test_memory_ring_is_bounded_and_recent_first():
    m = ActionMemory(3)
    for k in range(5):
        m.add(k, k)
    assert m.entries == [(4, 4), (3, 3), (2, 2)]
    m0 = ActionMemory(0)
    m0.add(1, 1)
    assert len(m0) == 0


def test_prompt_renders_all_placeholders():
    text = render_kp_prompt(0.3, 5.0, 2.0, [(0.3, 5.0), (0.7, 2.0)], (0.5, 1.5))
    assert "Current Kp: 0.3" in text and "Current KPI: 5" in text and "Target KPI: 2" in text
    assert "between 0.5 and 1.5" in text
    assert text.count("average iterations to converge") == 2
    assert text.endswith('{"Kp": 0}')


@pytest.mark.parametrize("reply,expected", [('{"Kp": 0.9}', 0.9),
                                            ('Reasoning: the KPI fell, keep going. {"Kp": 0.5}', 0.5)])
def test_llm_decide_parses(reply, expected):
    d = llm_decide(_req(0.3, 5.0), ScriptedBackend(lambda p, c: reply))
    assert d.kp == expected and d.raw_response == reply


def test_llm_decide_rejects_non_numeric():
    with pytest.raises(ExtractionError):
        llm_decide(_req(0.3, 5.0), ScriptedBackend(lambda p, c: '{"kp": "high"}'))


def test_llm_decide_clamps_out_of_bounds(caplog):
    d = llm_decide(_req(0.3, 5.0), ScriptedBackend(lambda p, c: '{"Kp": 40}'), (0.05, 10.0))
    assert d.kp == 10.0 and d.clamped
    assert "clamped" in caplog.text


def test_request_validation():
    with pytest.raises(ValueError):
        _req(0.0, 5.0)
    with pytest.raises(ValueError):
        _req(0.3, float("inf"))


class Counting:
    def __init__(self, inner):
        self.inner, self.calls, self.name = inner, 0, "counting"

    def complete(self, prompt, context=None):
        self.calls += 1
        return self.inner.complete(prompt, context)


def test_no_query_at_or_below_tau():
    backend = Counting(build_backend("kp-heuristic"))
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(tau=2.0), backend)
    for kpi in (1.0, 2.0, 1.5):
        assert agent.observe(kpi) is None
    assert backend.calls == 0 and agent.pcfg.kp == 0.3


def test_retune_above_tau_raises_gain():
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(tau=2.0), build_backend("kp-heuristic"))
    d = agent.observe(5.0)
    assert d.kp == pytest.approx(0.7) and agent.pcfg.kp == pytest.approx(0.7)
    assert agent.memory.entries == [(0.3, 5.0)]


def test_backend_failure_keeps_old_gain():
    events = []

    def broken(prompt, ctx):
        raise TimeoutError("backend took too long")
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(), ScriptedBackend(broken),
                       audit=lambda k, p: events.append((k, p)))
    assert agent.observe(3.0) is None
    assert agent.pcfg.kp == 0.3 and agent.failures == 1
    decision = [p for k, p in events if k == "kp_decision"]
    assert decision and decision[0]["new_kp"] is None and "error" in decision[0]


def test_garbage_reply_keeps_old_gain():
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(), ScriptedBackend(echo_json({"x": 1})))
    assert agent.observe(3.0) is None and agent.pcfg.kp == 0.3


def test_stateless_ablation_sends_no_memory():
    seen = []

    def spy(prompt, ctx):
        seen.append(ctx["request"].memory)
        return '{"Kp": 0.5}'
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(memory_capacity=0), ScriptedBackend(spy))
    agent.observe(5.0)
    agent.observe(5.0)
    assert seen == [(), ()]


def test_asynchronous_decision_does_not_block():
    release = threading.Event()

    def slow(prompt, ctx):
        release.wait(5)
        return '{"Kp": 1.2}'
    agent = Type1Agent(PControlConfig(0.3), MetaConfig(asynchronous=True), ScriptedBackend(slow))
    assert agent.observe(5.0) is None
    assert agent.pcfg.kp == 0.3
    agent.observe(6.0)
    release.set()
    agent.wait(5)
    agent.close()
    assert agent.pcfg.kp == 1.2
    assert agent.queries == 1
