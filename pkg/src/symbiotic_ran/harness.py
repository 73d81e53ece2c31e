"""
Experiment orchestration: route simulations, negotiation games and the
four-phase demo, each writing an audit trail and a metrics report.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .audit import AuditLogger, audit_path
from .baselines import BayesOptConfig, QLearnConfig, QLearner, bayes_enforce, qlearn_enforce
from .channel import LinkModel, Simulation, Trajectory
from .consensus import JitterSpec, appendix_a_consensus
from .llm import BackendSpec, build_backend
from .metrics import (MetricsReport, mean_sd, enforcement_stats, prb_integral, prb_savings, rmse_schedule,
                      trajectory_payload)
from .negotiation import (AgentSpec, NegotiationConfig, NegotiationTranscript, extract_initial_demands,
                          reference_interval, run_negotiation, score_numeric)
from .pcontrol import ControlLoop, EnforcementResult, Intent, PControlConfig, pcontrol_enforcer
from .scenario import Scenario, ScenarioError, build_schedule, build_trace, validate
from .type1 import MetaConfig, Type1Agent

log = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    run_id: str
    report: MetricsReport
    audit: AuditLogger
    results: list[EnforcementResult] = field(default_factory=list)
    trajectory: Trajectory | None = None
    schedule: list = field(default_factory=list)
    agent: Type1Agent | None = None
    transcripts: list[NegotiationTranscript] = field(default_factory=list)
    phases: list[dict] = field(default_factory=list)
    baseline: Trajectory | None = None

    @property
    def audit_path(self) -> Path | None:
        return self.audit.path


def _logger(sc: Scenario, out_dir: str | Path | None) -> AuditLogger:
    if out_dir is None:
        return AuditLogger(None, sc.run_id)
    path = audit_path(out_dir, sc.run_id)
    if path.exists():
        raise ScenarioError(f"{path} already exists; audit files are never overwritten")
    return AuditLogger(path, sc.run_id)


def apply_backend_override(sc: Scenario, spec: Any) -> Scenario:
    """Copy of ``sc`` with every backend (Type I and all negotiators) replaced."""
    BackendSpec.from_config(spec)
    sc = copy.deepcopy(sc)
    if sc.type1.get("backend") not in (None, "heuristic"):
        sc.type1["backend"] = spec
    for nego in [sc.negotiation] + [p.get("negotiation", {}) for p in sc.phases]:
        for a in nego.get("agents", []):
            a["backend"] = spec
        if "mediator" in nego:
            nego["mediator"]["backend"] = spec
    return sc


# --------------------------------------------------------------------------
# Type I control

@dataclass
class Controller:
    enforcer: Callable[[Simulation, Intent], EnforcementResult]
    agent: Type1Agent | None = None
    cfg: PControlConfig | None = None


def build_controller(sc: Scenario, sim: Simulation, audit: AuditLogger | None) -> Controller:
    c = dict(sc.controller)
    design = c.pop("design", "p-only")
    steps = c.pop("audit_steps", True)
    step_hook = audit.hook(design) if audit is not None and steps else None
    if design == "qlearn":
        learner = QLearner(QLearnConfig(**{"seed": sc.seed or 0, **c.get("qlearn", {})}))
        return Controller(lambda s, i: qlearn_enforce(s, i, learner=learner, audit=step_hook))
    if design == "bayes":
        bcfg = BayesOptConfig(**c.get("bayes", {}))
        return Controller(lambda s, i: bayes_enforce(s, i, bcfg, audit=step_hook))
    cfg = PControlConfig(c.get("kp", 0.75), c.get("max_iterations", 100),
                         tuple(c.get("kp_bounds", (0.05, 10.0))))
    enforcer = pcontrol_enforcer(cfg, step_hook)
    if design == "p-only":
        return Controller(enforcer, cfg=cfg)
    t1 = dict(sc.type1)
    backend = t1.pop("backend", None)
    if "kp_bounds" in t1:
        t1["kp_bounds"] = tuple(t1["kp_bounds"])
    t1.setdefault("kp_bounds", cfg.kp_bounds)
    if design == "standalone":
        t1["memory_capacity"] = 0
    meta = MetaConfig(**t1)
    client = None if backend in (None, "heuristic") else build_backend(backend)
    agent = Type1Agent(cfg, meta, client, audit.hook("type1") if audit is not None else None,
                       clock=lambda: sim.now)
    return Controller(enforcer, agent, cfg)


def _intent_rows(schedule) -> list:
    return [[t, None if i is None else i.target, None if i is None else i.tolerance]
            for t, i in schedule]


def _new_sim(sc: Scenario) -> Simulation:
    return Simulation(build_trace(sc), LinkModel.from_config(sc.link), sc.initial_prb, start=0)


def cmd_simulate(sc: Scenario, out_dir: str | Path | None = None, ci: bool = False) -> RunArtifacts:
    """Type I control over the scenario's trace and intent schedule."""
    validate(sc, ci)
    if sc.kind != "simulate":
        raise ScenarioError(f"simulate needs a 'simulate' scenario, got {sc.kind!r}")
    audit = _logger(sc, out_dir)
    try:
        audit.emit("run_start", {"t_ms": 0, "scenario": sc.to_dict()})
        sim = _new_sim(sc)
        ctl = build_controller(sc, sim, audit)
        schedule = build_schedule(sc)
        on_result = ctl.agent.on_enforcement if ctl.agent else None
        loop = ControlLoop(sim, ctl.enforcer, on_result)
        for t, intent in schedule:
            loop.run_until(t)
            loop.set_intent(intent)
        loop.run_until(sc.duration_ms)
        if ctl.agent is not None:
            ctl.agent.wait()
            ctl.agent.close()
        window = (0, sc.duration_ms)
        report = MetricsReport(**enforcement_stats(
            [r.iterations for r in loop.results],
            [r.trajectory[-1][0] - r.start_time for r in loop.results if r.trajectory]))
        report.rmse = rmse_schedule(sim.trajectory, schedule, window)
        report.prb_time_integral = prb_integral(sim.trajectory, window)
        report.retunes = len(ctl.agent.retunes) if ctl.agent else 0
        audit.emit("trajectory", {"t_ms": sim.now, "run": trajectory_payload(sim.trajectory),
                                  "intents": _intent_rows(schedule), "window": list(window),
                                  "baseline": None})
        audit.emit("report", report.to_dict())
    finally:
        audit.close()
    return RunArtifacts(sc.run_id, report, audit, loop.results, sim.trajectory, schedule, ctl.agent)


# --------------------------------------------------------------------------
# negotiation

def _agent(d: dict) -> AgentSpec:
    return AgentSpec(d["id"], d.get("intent", ""), d.get("backend", "cooperative"), d.get("demand"))


def negotiation_config(nego: dict, seed: int | None) -> NegotiationConfig:
    nego = dict(nego)
    j = dict(nego.get("jitter", {}))
    j.setdefault("seed", seed)
    kw = dict(agents=[_agent(a) for a in nego.get("agents", [])],
              max_rounds=nego.get("max_rounds", 5), epsilon=nego.get("epsilon", 2.0),
              use_guardrail=nego.get("use_guardrail", True),
              recompute_each_round=nego.get("recompute_each_round", False),
              problem=dict(nego.get("problem", {})), jitter=JitterSpec(**j),
              restarts=nego.get("restarts", 100))
    if "mediator" in nego:
        kw["mediator"] = _agent({"id": "mediator", **nego["mediator"]})
    try:
        return NegotiationConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"negotiation: {exc}") from None


def _merge(base: dict, phase: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in phase.items():
        if k == "problem":
            out["problem"] = {**out.get("problem", {}), **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


def play(cfg: NegotiationConfig, audit: AuditLogger | None, game: int, t_ms: int = 0) -> NegotiationTranscript:
    """Run one game, computing its reference interval up front for scoring."""
    ref = reference_interval(cfg, extract_initial_demands(cfg.agents))
    cfg.guardrail = ref
    hook = None
    if audit is not None:
        def hook(kind, payload):
            extra = {"game": game, "t_ms": t_ms}
            if kind == "negotiation_round":
                extra["reference"] = ref.mean
            audit.emit(kind, {**payload, **extra}, "negotiation")
    return run_negotiation(cfg, hook)


def cmd_negotiate(sc: Scenario, out_dir: str | Path | None = None, ci: bool = False) -> RunArtifacts:
    """One negotiation game, scored against the bootstrap reference."""
    validate(sc, ci)
    if sc.kind != "negotiate":
        raise ScenarioError(f"negotiate needs a 'negotiate' scenario, got {sc.kind!r}")
    cfg = negotiation_config(sc.negotiation, sc.seed)
    audit = _logger(sc, out_dir)
    try:
        audit.emit("run_start", {"t_ms": 0, "scenario": sc.to_dict()})
        tr = play(cfg, audit, 0)
        score = score_numeric(tr)
        report = MetricsReport(mae=score.mae, rounds_mean=float(score.rounds), rounds_sd=0.0,
                               negotiation_time_ms=score.wall_time_ms)
        audit.emit("report", {**report.to_dict(), "outcome": tr.outcome, "consensus": tr.consensus})
    finally:
        audit.close()
    if out_dir is not None:
        tr.save(Path(out_dir) / f"{sc.run_id}.transcript.jsonl")
    return RunArtifacts(sc.run_id, report, audit, transcripts=[tr])


# --------------------------------------------------------------------------
# four-phase demo

def _run_static(sc: Scenario, intent: Intent) -> Simulation:
    sim = _new_sim(sc)
    ctl = build_controller(sc, sim, None)
    loop = ControlLoop(sim, ctl.enforcer, ctl.agent.on_enforcement if ctl.agent else None)
    loop.set_intent(intent)
    loop.run_until(sc.duration_ms)
    return sim


def cmd_demo(sc: Scenario, out_dir: str | Path | None = None, ci: bool = False) -> RunArtifacts:
    """Negotiate, enforce and renegotiate across the phase script, then
    compare PRB use against a static-intent baseline on the same trace."""
    validate(sc, ci)
    if sc.kind != "demo":
        raise ScenarioError(f"demo needs a 'demo' scenario, got {sc.kind!r}")
    audit = _logger(sc, out_dir)
    tol = float(sc.negotiation.get("tolerance", 5.0))
    try:
        audit.emit("run_start", {"t_ms": 0, "scenario": sc.to_dict()})
        sim = _new_sim(sc)
        ctl = build_controller(sc, sim, audit)
        phases, schedule, transcripts, log_rows = sc.phases, [], [], []
        state = {"streak": 0, "dwell": None}

        def on_result(r: EnforcementResult):
            if ctl.agent is not None:
                ctl.agent.on_enforcement(r)
            state["streak"] = 0 if r.converged else state["streak"] + 1
            return state["dwell"] is not None and state["streak"] >= state["dwell"]

        loop = ControlLoop(sim, ctl.enforcer, on_result)

        def apply(k: int, phase: dict, trigger: str):
            row = {"t_ms": sim.now, "phase": phase.get("name", str(k)), "trigger": trigger,
                   "action": phase.get("action", "negotiate")}
            state["streak"] = 0
            if row["action"] == "off":
                loop.switch_off()
                schedule.append((sim.now, None))
            else:
                cfg = negotiation_config(_merge(sc.negotiation, phase.get("negotiation", {})), sc.seed)
                tr = play(cfg, audit, k, sim.now)
                transcripts.append(tr)
                row.update(consensus=tr.consensus, rounds=len(tr.rounds))
                if tr.consensus is None:
                    log.warning("phase %s: negotiation timed out; keeping the current intent", row["phase"])
                else:
                    intent = Intent(float(tr.consensus), tol)
                    loop.set_intent(intent)
                    schedule.append((sim.now, intent))
            audit.emit("phase", row)
            log_rows.append(row)

        for k, phase in enumerate(phases):
            trig = phase["trigger"]
            if "sla_violation" in trig:
                later = [p["trigger"].get("time", p["trigger"].get("manual")) for p in phases[k + 1:]]
                horizon = next((t for t in later if t is not None), sc.duration_ms)
                state["dwell"] = int(trig["sla_violation"].get("dwell", 3))
                fired = loop.run_until(horizon)
                state["dwell"] = None
                if not fired:
                    row = {"t_ms": sim.now, "phase": phase.get("name", str(k)),
                           "trigger": "sla_violation", "action": "skipped"}
                    audit.emit("phase", row)
                    log_rows.append(row)
                    continue
                apply(k, phase, "sla_violation")
            else:
                kind = "time" if "time" in trig else "manual"
                loop.run_until(trig[kind])
                apply(k, phase, kind)
        loop.run_until(sc.duration_ms)

        window = (0, sc.duration_ms)
        report = MetricsReport(**enforcement_stats(
            [r.iterations for r in loop.results],
            [r.trajectory[-1][0] - r.start_time for r in loop.results if r.trajectory]))
        if any(i is not None for _, i in schedule):
            report.rmse = rmse_schedule(sim.trajectory, schedule, window)
        report.prb_time_integral = prb_integral(sim.trajectory, window)
        report.retunes = len(ctl.agent.retunes) if ctl.agent else 0
        if transcripts:
            report.rounds_mean, report.rounds_sd = mean_sd([len(t.rounds) for t in transcripts])
            report.negotiation_time_ms = float(np.mean([t.wall_time_ms for t in transcripts]))
            errs = [abs(b - t.reference.mean) for t in transcripts for r in t.rounds for b in r.bids()]
            report.mae = float(np.mean(errs))
        base = None
        if sc.baseline is not None:
            base_sim = _run_static(sc, Intent(sc.baseline["target"], sc.baseline.get("tolerance", 5.0)))
            base = base_sim.trajectory
            report.prb_savings_percent = prb_savings(sim.trajectory, base, window)
        audit.emit("trajectory", {"t_ms": sim.now, "run": trajectory_payload(sim.trajectory),
                                  "intents": _intent_rows(schedule), "window": list(window),
                                  "baseline": trajectory_payload(base) if base is not None else None})
        audit.emit("report", report.to_dict())
    finally:
        audit.close()
    if out_dir is not None:
        for k, tr in enumerate(transcripts):
            tr.save(Path(out_dir) / f"{sc.run_id}.game{k}.transcript.jsonl")
    return RunArtifacts(sc.run_id, report, audit, loop.results, sim.trajectory, schedule, ctl.agent,
                        transcripts, log_rows, base)


# --------------------------------------------------------------------------
# oracle

def cmd_oracle(intents: Sequence[float], target: float) -> int | None:
    if len(intents) == 0:
        raise ScenarioError("oracle needs at least one intent")
    try:
        return appendix_a_consensus(list(intents), target)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def run(sc: Scenario, out_dir: str | Path | None = None, ci: bool = False) -> RunArtifacts:
    return {"simulate": cmd_simulate, "negotiate": cmd_negotiate, "demo": cmd_demo}[sc.kind](sc, out_dir, ci)


def summary(art: RunArtifacts) -> dict:
    out = {"run_id": art.run_id, "report": art.report.to_dict()}
    if art.phases:
        out["phases"] = art.phases
    if art.transcripts:
        out["consensus"] = [t.consensus for t in art.transcripts]
    if art.agent is not None:
        out["kp_sequence"] = [art.agent.retunes[0].old_kp] + [r.new_kp for r in art.agent.retunes] \
            if art.agent.retunes else [art.agent.pcfg.kp]
    return json.loads(json.dumps(out))
