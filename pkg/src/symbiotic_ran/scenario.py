"""
Scenario files: one JSON document fully determines a run.

Built-in presets cover the route experiments, the gain-step replay, the
negotiation games and the four-phase demo.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .channel import ChannelTrace, LinkModel, load_trace, step_trace, synthetic_dip_trace
from .llm import BackendSpec
from .pcontrol import Intent

SCENARIO_SCHEMA = "symbiotic-ran/scenario"
SCENARIO_VERSION = 1
KINDS = ("simulate", "negotiate", "demo")
DESIGNS = ("p-only", "symbiotic", "standalone", "qlearn", "bayes")


class ScenarioError(ValueError):
    """Invalid scenario; reported before anything runs."""


@dataclass
class Scenario:
    name: str
    kind: str
    seed: int | None = None
    trace: dict = field(default_factory=dict)
    link: dict = field(default_factory=dict)
    initial_prb: float = 100.0
    duration_ms: int | None = None
    intents: dict = field(default_factory=dict)
    controller: dict = field(default_factory=dict)
    type1: dict = field(default_factory=dict)
    negotiation: dict = field(default_factory=dict)
    phases: list = field(default_factory=list)
    baseline: dict | None = None
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def to_dict(self) -> dict:
        return {"schema": SCENARIO_SCHEMA, "version": SCENARIO_VERSION, "name": self.name,
                "kind": self.kind, "seed": self.seed, "trace": self.trace, "link": self.link,
                "initial_prb": self.initial_prb, "duration_ms": self.duration_ms,
                "intents": self.intents, "controller": self.controller, "type1": self.type1,
                "negotiation": self.negotiation, "phases": self.phases, "baseline": self.baseline}

    @property
    def run_id(self) -> str:
        return f"{self.name}-seed{self.seed if self.seed is not None else 'none'}"

    def backend_specs(self) -> list[BackendSpec]:
        """Every backend the scenario would talk to."""
        out = []
        if self.type1.get("backend") is not None:
            out.append(BackendSpec.from_config(self.type1["backend"]))
        nego = [self.negotiation] + [p.get("negotiation", {}) for p in self.phases]
        for n in nego:
            for a in list(n.get("agents", [])) + ([n["mediator"]] if "mediator" in n else []):
                if a.get("backend") is not None:
                    out.append(BackendSpec.from_config(a["backend"]))
        return out


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioError(msg)


def scenario_from_dict(d: Mapping[str, Any], base_dir: str | Path | None = None) -> Scenario:
    d = dict(d)
    _require(d.pop("schema", SCENARIO_SCHEMA) == SCENARIO_SCHEMA, "not a scenario document")
    version = d.pop("version", SCENARIO_VERSION)
    _require(version == SCENARIO_VERSION, f"unsupported scenario version {version}")
    known = set(Scenario.__dataclass_fields__) - {"base_dir"}
    extra = set(d) - known
    _require(not extra, f"unknown scenario fields {sorted(extra)}")
    _require("name" in d and "kind" in d, "scenario needs 'name' and 'kind'")
    sc = Scenario(**copy.deepcopy(d), base_dir=Path(base_dir) if base_dir else Path.cwd())
    validate(sc)
    return sc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc, path.parent)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2) + "\n", encoding="utf-8")


def validate(sc: Scenario, ci: bool = False) -> None:
    """Pre-flight checks. With ``ci`` set, http backends are refused."""
    _require(sc.kind in KINDS, f"kind must be one of {KINDS}")
    design = sc.controller.get("design", "p-only")
    _require(design in DESIGNS, f"controller design must be one of {DESIGNS}")
    if sc.kind in ("simulate", "demo"):
        _require(bool(sc.trace), "scenario needs a trace")
        _require(sc.duration_ms is not None and sc.duration_ms > 0, "duration_ms must be > 0")
        if "file" in sc.trace:
            _require((sc.base_dir / sc.trace["file"]).exists(),
                     f"trace file not found: {sc.trace['file']}")
        try:
            LinkModel.from_config(sc.link)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"link: {exc}") from None
    if sc.kind == "simulate":
        _require(bool(sc.intents), "simulate needs an intent schedule")
        if "random" in sc.intents:
            _require(sc.seed is not None, "randomized intents need a seed")
    if sc.kind == "negotiate":
        _require(len(sc.negotiation.get("agents", [])) >= 2, "negotiation needs >= 2 agents")
    if sc.kind == "demo":
        _require(bool(sc.phases), "demo needs phases")
        last = -1
        for p in sc.phases:
            trig = p.get("trigger", {})
            _require(len(trig) == 1 and next(iter(trig)) in ("time", "sla_violation", "manual"),
                     f"phase {p.get('name')}: trigger must be one of time/sla_violation/manual")
            _require(p.get("action", "negotiate") in ("negotiate", "off"),
                     f"phase {p.get('name')}: unknown action")
            t = trig.get("time", trig.get("manual"))
            if t is not None:
                _require(t >= last, "time-triggered phases must be ordered")
                last = t
        _require("time" in sc.phases[0].get("trigger", {}), "first phase needs a time trigger")
    try:
        specs = sc.backend_specs()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"backend: {exc}") from None
    if ci:
        bad = [s.endpoint for s in specs if s.kind == "http"]
        _require(not bad, f"http backends are not allowed in CI mode: {bad}")


# --------------------------------------------------------------------------
# builders

def build_trace(sc: Scenario) -> ChannelTrace:
    spec = sc.trace
    if "file" in spec:
        return load_trace(sc.base_dir / spec["file"])
    if "steps" in spec:
        return step_trace([tuple(s) for s in spec["steps"]], id=spec.get("id", "steps"))
    if "synthetic_dip" in spec:
        params = dict(spec["synthetic_dip"])
        params.setdefault("seed", sc.seed if sc.seed is not None else 0)
        if "dip" in params:
            params["dip"] = tuple(params["dip"])
        return synthetic_dip_trace(**params)
    raise ScenarioError(f"unknown trace spec {sorted(spec)}")


def build_schedule(sc: Scenario) -> list[tuple[int, Intent | None]]:
    """Intent schedule as ``(start_ms, intent)`` pairs."""
    spec, end = sc.intents, sc.duration_ms
    if "fixed" in spec:
        f = spec["fixed"]
        return [(0, Intent(f["target"], f.get("tolerance", 5.0)))]
    if "schedule" in spec:
        rows = [(int(t), None if tgt is None else Intent(tgt, tol)) for t, tgt, tol in spec["schedule"]]
        _require(all(a[0] < b[0] for a, b in zip(rows, rows[1:])), "schedule times must increase")
        return rows
    if "alternate" in spec:
        a = spec["alternate"]
        targets, hold = a["targets"], int(a["hold_ms"])
        return [(t, Intent(targets[k % len(targets)], a.get("tolerance", 5.0)))
                for k, t in enumerate(range(0, end, hold))]
    if "random" in spec:
        r = spec["random"]
        rng = np.random.default_rng(sc.seed)
        hold = int(r["hold_ms"])
        return [(t, Intent(float(np.round(rng.uniform(r["low"], r["high"]), 1)), r.get("tolerance", 5.0)))
                for t in range(0, end, hold)]
    raise ScenarioError(f"unknown intent spec {sorted(spec)}")


# --------------------------------------------------------------------------
# presets

def _doc(**kw) -> dict:
    return {"schema": SCENARIO_SCHEMA, "version": SCENARIO_VERSION, **kw}


def _agents(demands, backend, prefix="tenant"):
    return [{"id": f"{prefix}{k + 1}", "intent": f"My service needs about {d} Mbps of throughput.",
             "backend": backend, "demand": d} for k, d in enumerate(demands)]


def _route(kp: float, name: str) -> dict:
    return _doc(name=name, kind="simulate", seed=0,
                trace={"synthetic_dip": {"duration_ms": 60_000}},
                duration_ms=60_000, initial_prb=100.0,
                intents={"fixed": {"target": 20.0, "tolerance": 5.0}},
                controller={"design": "p-only", "kp": kp})


def _negotiate(name: str, backend, guardrail: bool) -> dict:
    return _doc(name=name, kind="negotiate", seed=0,
                negotiation={"agents": _agents([10, 50, 100], backend), "use_guardrail": guardrail,
                             "max_rounds": 5, "epsilon": 2.0, "problem": {"x_target": 55.0},
                             "jitter": {"distribution": "gaussian", "scale": 5.0}, "restarts": 100})


DEMO_TRACE = {"steps": [[0, 28], [200_000, 7], [400_000, 28]], "id": "demo-route"}


def _demo() -> dict:
    coop = "cooperative"

    def phase(name, trigger, demands=None, target=None, action="negotiate"):
        p = {"name": name, "trigger": trigger, "action": action}
        if action == "negotiate":
            p["negotiation"] = {"agents": _agents(demands, coop), "problem": {"x_target": target}}
        return p
    return _doc(name="demo", kind="demo", seed=0, trace=DEMO_TRACE, duration_ms=600_000,
                initial_prb=0.0, controller={"design": "symbiotic", "kp": 0.75},
                type1={"tau": 2.0, "memory_capacity": 10, "window": 4,
                       "backend": {"kind": "scripted", "name": "kp-heuristic"}},
                negotiation={"max_rounds": 5, "epsilon": 2.0, "use_guardrail": True,
                             "jitter": {"distribution": "gaussian", "scale": 5.0}, "restarts": 100,
                             "tolerance": 5.0},
                phases=[phase("I", {"time": 0}, [10, 50, 100], 49.0),
                        phase("II", {"sla_violation": {"dwell": 3}}, [0, 20, 20], 13.0),
                        phase("III", {"time": 300_000}, action="off"),
                        phase("IV", {"time": 400_000}, [10, 50, 100], 57.0)],
                baseline={"target": 55.0, "tolerance": 5.0})


PRESETS = {
    "route-tuned": lambda: _route(0.75, "route-tuned"),
    "route-untuned": lambda: _route(0.10, "route-untuned"),
    "gain-step": lambda: _doc(
        name="gain-step", kind="simulate", seed=0,
        trace={"steps": [[0, 28], [16_000, 14]], "id": "mcs-step"},
        duration_ms=32_000, initial_prb=0.0,
        intents={"alternate": {"targets": [10.0, 50.0], "tolerance": 4.0, "hold_ms": 1000}},
        controller={"design": "symbiotic", "kp": 0.3},
        type1={"tau": 2.0, "memory_capacity": 10, "window": 4,
               "backend": {"kind": "scripted", "name": "kp-heuristic"}}),
    "negotiate-guardrail": lambda: _negotiate("negotiate-guardrail",
                                              {"kind": "scripted", "name": "compliant"}, True),
    "negotiate-standalone": lambda: _negotiate("negotiate-standalone", "greedy", False),
    "demo": _demo,
    "static-baseline": lambda: _doc(
        name="static-baseline", kind="simulate", seed=0, trace=DEMO_TRACE, duration_ms=600_000,
        initial_prb=0.0, intents={"fixed": {"target": 55.0, "tolerance": 5.0}},
        controller={"design": "symbiotic", "kp": 0.75},
        type1={"tau": 2.0, "memory_capacity": 10, "window": 4,
               "backend": {"kind": "scripted", "name": "kp-heuristic"}}),
}


def preset(name: str) -> Scenario:
    try:
        doc = PRESETS[name]()
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return scenario_from_dict(doc)
