"""
Mediated multi-round SLA negotiation between tenant agents.

Every round, all tenants answer in parallel with a proposal and a short
reasoning; the mediator then answers with its own proposal. The game ends
once all bids (mediator included) fit in an ``epsilon``-wide band. A
confidence interval from the consensus optimizer can be injected into the
prompts as a numerical guard-rail.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .consensus import ConfidenceInterval, ConsensusProblem, JitterSpec, bootstrap_ci
from .llm import (Backend, BackendError, BackendSpec, ExtractionError, build_backend,
                  extract_json_field, register_scripted)
from .prompts import render_guardrail, template

log = logging.getLogger(__name__)

TRANSCRIPT_SCHEMA = "symbiotic-ran/negotiation-transcript"
TRANSCRIPT_VERSION = 1
SLA_RANGE = (0.0, 100.0)
FIELD = "throughput"


class NegotiationError(RuntimeError):
    pass


class DemandError(ValueError):
    """An agent's demand could not be read or is out of range."""

    def __init__(self, agent_id: str, message: str):
        super().__init__(f"agent {agent_id!r}: {message}")
        self.agent_id = agent_id


@dataclass
class SlaProposal:
    agent_id: str
    round: int
    throughput: float
    reasoning: str
    latency: float = 0.0
    within_guardrail: bool | None = None

    def __post_init__(self):
        lo, hi = SLA_RANGE
        if not lo <= self.throughput <= hi:
            raise ValueError(f"throughput {self.throughput} outside {SLA_RANGE}")
        if not self.reasoning.strip():
            raise ValueError("reasoning must be non-empty")

    def message(self) -> str:
        return f"Reasoning: {self.reasoning} {json.dumps({FIELD: self.throughput})}"


@dataclass
class AgentSpec:
    id: str
    intent: str
    backend: Any = "cooperative"
    demand: float | None = None


@dataclass
class NegotiationConfig:
    """One game. ``backend`` entries are :class:`BackendSpec`, a config
    mapping, a scripted name, or a ready backend object.

    The guard-rail is either given, or computed from the initial demands
    when ``use_guardrail`` is set. ``problem`` holds consensus-problem
    parameters other than the demands.
    """

    agents: list[AgentSpec]
    mediator: AgentSpec = field(default_factory=lambda: AgentSpec(
        "mediator", "Balance the tenants' goals with the network target.", "midpoint-mediator"))
    max_rounds: int = 5
    epsilon: float = 2.0
    use_guardrail: bool = True
    guardrail: ConfidenceInterval | None = None
    recompute_each_round: bool = False
    problem: dict = field(default_factory=dict)
    jitter: JitterSpec = field(default_factory=JitterSpec)
    restarts: int = 100

    def __post_init__(self):
        if len(self.agents) < 2:
            raise ValueError("need at least 2 tenant agents")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        ids = [a.id for a in self.agents] + [self.mediator.id]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")

    @property
    def x_target(self) -> float:
        return float(self.problem.get("x_target", 55.0))


@dataclass
class RoundRecord:
    index: int
    proposals: list[SlaProposal]
    mediator: SlaProposal | None
    abstained: dict[str, str] = field(default_factory=dict)
    guardrail: tuple[int, int] | None = None
    spread: float = math.inf
    wall_time_ms: float = 0.0

    def bids(self) -> list[float]:
        return [p.throughput for p in self.proposals]

    def to_dict(self) -> dict:
        return {"round": self.index,
                "proposals": [asdict(p) for p in self.proposals],
                "mediator": asdict(self.mediator) if self.mediator else None,
                "abstained": self.abstained,
                "guardrail": list(self.guardrail) if self.guardrail else None,
                "spread": self.spread, "wall_time_ms": self.wall_time_ms}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoundRecord":
        return cls(d["round"], [SlaProposal(**p) for p in d["proposals"]],
                   SlaProposal(**d["mediator"]) if d["mediator"] else None,
                   dict(d["abstained"]), tuple(d["guardrail"]) if d["guardrail"] else None,
                   d["spread"], d["wall_time_ms"])


@dataclass
class NegotiationTranscript:
    rounds: list[RoundRecord]
    consensus: int | None
    guardrail: ConfidenceInterval | None
    reference: ConfidenceInterval | None
    demands: list[float]
    wall_time_ms: float

    @property
    def outcome(self) -> str:
        return "timeout" if self.consensus is None else "consensus"

    def lines(self) -> list[str]:
        ci = lambda c: c.to_dict() if c is not None else None  # noqa: E731
        head = {"schema": TRANSCRIPT_SCHEMA, "version": TRANSCRIPT_VERSION,
                "demands": self.demands, "guardrail": ci(self.guardrail),
                "reference": ci(self.reference)}
        tail = {"outcome": self.outcome, "consensus": self.consensus,
                "rounds": len(self.rounds), "wall_time_ms": self.wall_time_ms}
        out = [head] + [r.to_dict() for r in self.rounds] + [tail]
        return [json.dumps(o, sort_keys=True) for o in out]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NegotiationTranscript":
        rows = [json.loads(line) for line in Path(path).read_text("utf-8").splitlines() if line.strip()]
        if not rows or rows[0].get("schema") != TRANSCRIPT_SCHEMA:
            raise ValueError(f"{path}: not a negotiation transcript")
        if rows[0]["version"] != TRANSCRIPT_VERSION:
            raise ValueError(f"{path}: unsupported transcript version {rows[0]['version']}")
        head, body, tail = rows[0], rows[1:-1], rows[-1]

        def ci(d):
            if d is None:
                return None
            return ConfidenceInterval(d["mean"], d["half_width"], d["lower"], d["upper"],
                                      d["r"], d["sd"], d.get("excluded", 0))
        return cls([RoundRecord.from_dict(r) for r in body], tail["consensus"],
                   ci(head["guardrail"]), ci(head["reference"]), head["demands"],
                   tail["wall_time_ms"])


# --------------------------------------------------------------------------
# demands and guard-rail

_MBPS = re.compile(r"(-?\d+(?:\.\d+)?)\s*Mbps", re.IGNORECASE)


def _demand_from_text(agent_id: str, text: str) -> float:
    try:
        return extract_json_field(text, FIELD)
    except ExtractionError:
        m = _MBPS.search(text)
        if m is None:
            raise DemandError(agent_id, "no throughput value in intent") from None
        return float(m.group(1))


def extract_initial_demands(items: Sequence[AgentSpec | SlaProposal | str],
                            ids: Sequence[str] | None = None) -> np.ndarray:
    """Initial numeric claims, one per agent.

    Accepts agent specs (explicit ``demand`` first, then the intent text),
    first-round proposals, or raw response strings.
    """
    out = []
    for k, item in enumerate(items):
        if isinstance(item, AgentSpec):
            aid = item.id
            value = item.demand if item.demand is not None else _demand_from_text(aid, item.intent)
        elif isinstance(item, SlaProposal):
            aid, value = item.agent_id, item.throughput
        else:
            aid = ids[k] if ids else str(k)
            value = _demand_from_text(aid, str(item))
        lo, hi = SLA_RANGE
        if not lo <= value <= hi:
            raise DemandError(aid, f"throughput {value} outside {SLA_RANGE}")
        out.append(float(value))
    return np.asarray(out)


def guardrail_bounds(interval: ConfidenceInterval | None) -> tuple[int, int] | None:
    """Integer bounds as stated to the agents (floor L, ceil U)."""
    if interval is None:
        return None
    return math.floor(interval.lower), math.ceil(interval.upper)


def reference_interval(config: NegotiationConfig, demands: Sequence[float]) -> ConfidenceInterval:
    problem = ConsensusProblem(tuple(demands), **config.problem)
    return bootstrap_ci(problem, config.jitter, config.restarts)


# --------------------------------------------------------------------------
# prompts

def _history(rounds: Sequence[RoundRecord]) -> str:
    if not rounds:
        return "Negotiation history: none yet, this is the first round."
    lines = ["Negotiation history:"]
    for r in rounds:
        bids = ", ".join(f"{p.agent_id}: {p.throughput:g} Mbps" for p in r.proposals)
        med = f"{r.mediator.throughput:g} Mbps" if r.mediator else "no proposal"
        lines.append(f"Round {r.index}: {bids}; mediator: {med}")
    return "\n".join(lines)


def tenant_prompt(agent: AgentSpec, rounds: Sequence[RoundRecord], guardrail: str) -> str:
    parts = [template("tenant"), f"Your intent: {agent.intent}"]
    if guardrail:
        parts.append(guardrail)
    parts.append(_history(rounds))
    if rounds:
        last = rounds[-1]
        msgs = [f"{p.agent_id}: {p.message()}" for p in last.proposals if p.agent_id != agent.id]
        if last.mediator:
            msgs.append(f"mediator: {last.mediator.message()}")
        parts.append("Last messages of the other parties:\n" + "\n".join(msgs))
    return "\n\n".join(parts)


def mediator_prompt(mediator: AgentSpec, proposals: Sequence[SlaProposal],
                    rounds: Sequence[RoundRecord], guardrail: str) -> str:
    parts = [template("mediator"), f"Operator intent: {mediator.intent}"]
    if guardrail:
        parts.append(guardrail)
    parts.append(_history(rounds))
    parts.append("Tenant proposals this round:\n"
                 + "\n".join(f"{p.agent_id}: {p.message()}" for p in proposals))
    return "\n\n".join(parts)


def _reasoning(text: str) -> str:
    head = text[:text.find("{")] if "{" in text else text
    head = re.sub(r"^\s*reasoning\s*:\s*", "", head, flags=re.IGNORECASE).strip()
    return head or text.strip()


# --------------------------------------------------------------------------
# protocol

@dataclass
class NegotiationState:
    demands: np.ndarray
    guardrail: ConfidenceInterval | None
    rounds: list[RoundRecord] = field(default_factory=list)
    backends: dict[str, Backend] = field(default_factory=dict)


AuditHook = Callable[[str, dict], None]


def _backend(spec) -> Backend:
    return spec if hasattr(spec, "complete") else build_backend(spec)


def _proposal(agent_id: str, index: int, exchange, bounds) -> SlaProposal:
    value = extract_json_field(exchange.response, FIELD)
    inside = None if bounds is None else bounds[0] <= value <= bounds[1]
    return SlaProposal(agent_id, index, value, _reasoning(exchange.response),
                       exchange.latency_ms, inside)


def _query(backend: Backend, prompt: str, context: dict, agent_id: str, index: int, bounds):
    """Returns (proposal or None, exchange or None, error text or None)."""
    try:
        ex = backend.complete(prompt, context)
    except BackendError as exc:
        return None, exc.exchange, f"{type(exc).__name__}: {exc}"
    try:
        return _proposal(agent_id, index, ex, bounds), ex, None
    except (ExtractionError, ValueError) as exc:
        return None, ex, f"{type(exc).__name__}: {exc}"


def run_round(config: NegotiationConfig, state: NegotiationState,
              audit: AuditHook | None = None) -> RoundRecord:
    index = len(state.rounds) + 1
    bounds = guardrail_bounds(state.guardrail)
    fragment = render_guardrail(state.guardrail)
    last = state.rounds[-1] if state.rounds else None
    mediator_last = last.mediator.throughput if last and last.mediator else None

    def tenant_call(k: int):
        agent = config.agents[k]
        own_last = next((p.throughput for p in last.proposals if p.agent_id == agent.id), None) if last else None
        ctx = {"role": "tenant", "agent_id": agent.id, "round": index,
               "demand": float(state.demands[k]), "guardrail": bounds,
               "mediator_last": mediator_last, "own_last": own_last}
        return _query(state.backends[agent.id], tenant_prompt(agent, state.rounds, fragment),
                      ctx, agent.id, index, bounds)

    with ThreadPoolExecutor(max_workers=min(32, len(config.agents))) as pool:
        answers = list(pool.map(tenant_call, range(len(config.agents))))

    proposals, abstained, exchanges = [], {}, []
    for agent, (prop, ex, err) in zip(config.agents, answers):
        if ex is not None:
            exchanges.append((agent.id, ex, err))
        if prop is None:
            abstained[agent.id] = err
            log.warning("round %d: %s abstains (%s)", index, agent.id, err)
        else:
            proposals.append(prop)
    if not proposals:
        raise NegotiationError(f"round {index}: every tenant abstained")

    med = config.mediator
    ctx = {"role": "mediator", "round": index, "bids": [p.throughput for p in proposals],
           "target": config.x_target, "guardrail": bounds}
    med_prop, ex, err = _query(state.backends[med.id],
                               mediator_prompt(med, proposals, state.rounds, fragment),
                               ctx, med.id, index, bounds)
    if ex is not None:
        exchanges.append((med.id, ex, err))
    if med_prop is None:
        abstained[med.id] = err
        log.warning("round %d: mediator abstains (%s)", index, err)

    values = [p.throughput for p in proposals] + ([med_prop.throughput] if med_prop else [])
    wall = max(p.latency for p in proposals) + (ex.latency_ms if ex is not None else 0.0)
    record = RoundRecord(index, proposals, med_prop, abstained, bounds,
                         max(values) - min(values), wall)
    if audit is not None:
        for aid, e, error in exchanges:
            audit("backend_exchange", {"agent_id": aid, "round": index, **e.to_record(),
                                       **({"error": error} if error else {})})
        audit("negotiation_round", record.to_dict())
    return record


def run_negotiation(config: NegotiationConfig, audit: AuditHook | None = None) -> NegotiationTranscript:
    demands = extract_initial_demands(config.agents)
    reference = config.guardrail
    if reference is None:
        reference = reference_interval(config, demands)
    state = NegotiationState(demands, reference if config.use_guardrail else None)
    state.backends = {a.id: _backend(a.backend) for a in config.agents}
    state.backends[config.mediator.id] = _backend(config.mediator.backend)

    consensus = None
    for _ in range(config.max_rounds):
        if config.recompute_each_round and config.use_guardrail and state.rounds:
            state.guardrail = reference_interval(config, state.rounds[-1].bids())
        record = run_round(config, state, audit)
        state.rounds.append(record)
        if record.spread < config.epsilon:
            consensus = math.floor(float(np.mean(record.bids())))
            break
    wall = sum(r.wall_time_ms for r in state.rounds)
    return NegotiationTranscript(state.rounds, consensus, state.guardrail, reference,
                                 [float(d) for d in demands], wall)


@dataclass
class NegotiationScore:
    mae: float
    rounds: int
    wall_time_ms: float


def score_numeric(transcript: NegotiationTranscript, pareto_ref: float | None = None) -> NegotiationScore:
    """Mean absolute deviation of every tenant bid in every round from the reference."""
    bids = [b for r in transcript.rounds for b in r.bids()]
    if not bids:
        raise ValueError("empty transcript")
    if pareto_ref is None:
        if transcript.reference is None:
            raise ValueError("no reference value available")
        pareto_ref = transcript.reference.mean
    mae = float(np.mean(np.abs(np.asarray(bids) - pareto_ref)))
    return NegotiationScore(mae, len(transcript.rounds), transcript.wall_time_ms)


# --------------------------------------------------------------------------
# scripted personalities

def _answer(reasoning: str, value: float) -> str:
    return f"Reasoning: {reasoning} {json.dumps({FIELD: round(float(value), 3)})}"


def _greedy_bid(ctx, concession: float) -> float:
    own, med = ctx.get("own_last"), ctx.get("mediator_last")
    if own is None or med is None:
        return ctx["demand"]
    return own + concession * (med - own)


@register_scripted("greedy")
def _greedy(concession: float = 0.2, **_):
    def respond(prompt, ctx):
        bid = _greedy_bid(ctx, concession)
        why = "I hold close to my own demand and give ground only slowly."
        g = ctx.get("guardrail")
        if g and not g[0] <= bid <= g[1]:
            why += " Going outside the suggested interval is the trade-off my service needs."
        return _answer(why, bid)
    return respond


@register_scripted("cooperative")
def _cooperative(**_):
    def respond(prompt, ctx):
        med = ctx.get("mediator_last")
        if med is None:
            return _answer("I open with my own demand.", ctx["demand"])
        return _answer("I accept the mediator's proposal to close quickly.", med)
    return respond


@register_scripted("compliant")
def _compliant(base: str = "greedy", concession: float = 0.2, **_):
    inner = {"greedy": lambda c: _greedy_bid(c, concession),
             "cooperative": lambda c: c["mediator_last"] if c.get("mediator_last") is not None else c["demand"]}[base]

    def respond(prompt, ctx):
        bid = inner(ctx)
        g = ctx.get("guardrail")
        if g:
            bid = min(g[1], max(g[0], bid))
            return _answer("I keep my offer inside the suggested interval.", bid)
        return _answer("No interval was given, so I bid my preference.", bid)
    return respond


@register_scripted("midpoint-mediator")
def _midpoint_mediator(**_):
    def respond(prompt, ctx):
        g = ctx.get("guardrail")
        if g:
            return _answer("The optimizer's interval balances all goals, so I propose its centre.",
                           (g[0] + g[1]) / 2)
        value = (float(np.mean(ctx["bids"])) + ctx["target"]) / 2
        return _answer("I split the difference between the tenants' average and the network target.", value)
    return respond
