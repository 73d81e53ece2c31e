"""
Type I agent: a meta-optimizer that retunes the P-controller gain.

After every full KPI cluster the agent compares the mean iteration count
against ``tau``. Above it, a decision backend proposes a new gain, which
lands on the shared :class:`PControlConfig` between control steps.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .llm import Backend, BackendError, ExtractionError, extract_json_field, register_scripted
from .pcontrol import EnforcementResult, KpiWindow, PControlConfig
from .prompts import render_kp_prompt

log = logging.getLogger(__name__)

DEFAULT_KP_BOUNDS = (0.05, 10.0)
INITIAL_STEP = 0.4


class ActionMemory:
    """Bounded most-recent-first ring of ``(kp, mean_iterations)`` pairs."""

    def __init__(self, capacity: int = 10):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._entries: deque[tuple[float, float]] = deque(maxlen=capacity or None)

    def add(self, kp: float, kpi: float) -> None:
        if self.capacity:
            self._entries.appendleft((float(kp), float(kpi)))

    @property
    def entries(self) -> list[tuple[float, float]]:
        return list(self._entries)

    def __len__(self):
        return len(self._entries)

    def clear(self) -> None:
        self._entries.clear()


@dataclass
class MetaConfig:
    tau: float = 2.0
    memory_capacity: int = 10
    kp_bounds: tuple[float, float] = DEFAULT_KP_BOUNDS
    backend: str = "heuristic"
    target_kpi: float | None = None
    window: int = 4
    initial_step: float = INITIAL_STEP
    asynchronous: bool = False

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be >= 0")
        if not 3 <= self.window <= 5:
            log.warning("KPI window %d outside the usual 3-5 range", self.window)

    @property
    def target(self) -> float:
        return self.tau if self.target_kpi is None else self.target_kpi


@dataclass(frozen=True)
class KpDecisionRequest:
    current_kp: float
    current_kpi: float
    target_kpi: float
    memory: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        for name in ("current_kp", "current_kpi", "target_kpi"):
            v = getattr(self, name)
            if not (v > 0 and v < float("inf")):
                raise ValueError(f"{name} must be finite and positive, got {v}")


@dataclass
class KpDecision:
    kp: float
    raw_response: str = ""
    latency: float = 0.0
    clamped: bool = False
    exchange: Any = field(default=None, repr=False)


def _clamp(kp: float, bounds: tuple[float, float]) -> tuple[float, bool]:
    lo, hi = bounds
    out = min(hi, max(lo, kp))
    return out, out != kp


def heuristic_decide(req: KpDecisionRequest, kp_bounds: tuple[float, float] = DEFAULT_KP_BOUNDS,
                     initial_step: float = INITIAL_STEP) -> KpDecision:
    """Direction-memory rule.

    Look at the most recent gain change in memory. If the KPI went down
    after it, step again the same way by the same amount; otherwise go back
    by half that amount. Without a past change, raise the gain by
    ``initial_step``.
    """
    history = list(req.memory)
    if not history or history[0] != (req.current_kp, req.current_kpi):
        history.insert(0, (req.current_kp, req.current_kpi))
    newest = history[0]
    older = next((h for h in history[1:] if h[0] != newest[0]), None)
    if older is None:
        kp = req.current_kp + initial_step
    else:
        delta = newest[0] - older[0]
        if newest[1] < older[1]:
            kp = req.current_kp + delta
        else:
            kp = req.current_kp - delta / 2
    kp, clamped = _clamp(round(kp, 6), kp_bounds)
    return KpDecision(kp, json.dumps({"Kp": kp}), 0.0, clamped)


def llm_decide(req: KpDecisionRequest, client: Backend,
               kp_bounds: tuple[float, float] = DEFAULT_KP_BOUNDS) -> KpDecision:
    """Render the tuning prompt, query ``client`` and parse ``{"Kp": ...}``."""
    prompt = render_kp_prompt(req.current_kp, req.current_kpi, req.target_kpi,
                              req.memory, kp_bounds)
    exchange = client.complete(prompt, {"request": req, "kp_bounds": kp_bounds})
    value = extract_json_field(exchange.response, "Kp")
    if not value > 0:
        raise ExtractionError(f"Kp must be positive, got {value}")
    kp, clamped = _clamp(value, kp_bounds)
    if clamped:
        log.warning("backend proposed Kp=%s outside %s; clamped to %s", value, kp_bounds, kp)
    return KpDecision(kp, exchange.response, exchange.latency_ms, clamped, exchange)


@register_scripted("kp-heuristic")
def _scripted_kp_heuristic(initial_step: float = INITIAL_STEP, **_) -> Callable:
    def respond(prompt: str, context: Mapping[str, Any]) -> str:
        req = context["request"]
        bounds = tuple(context.get("kp_bounds", DEFAULT_KP_BOUNDS))
        d = heuristic_decide(req, bounds, initial_step)
        return f"Reasoning: the KPI trend sets the direction of the next change. {json.dumps({'Kp': d.kp})}"
    return respond


AuditHook = Callable[[str, dict], None]


@dataclass
class Retune:
    kpi: float
    old_kp: float
    new_kp: float
    t_ms: int | None = None


class Type1Agent:
    """Watches KPI clusters and retunes ``pcfg.kp`` when they exceed ``tau``."""

    def __init__(self, pcfg: PControlConfig, meta: MetaConfig | None = None,
                 backend: Backend | None = None, audit: AuditHook | None = None,
                 clock: Callable[[], int] | None = None):
        self.pcfg = pcfg
        self.meta = meta or MetaConfig(kp_bounds=pcfg.kp_bounds)
        self.backend = backend
        self.audit = audit
        self.clock = clock
        self.memory = ActionMemory(self.meta.memory_capacity)
        self.window = KpiWindow(self.meta.window)
        self.kpis: list[float] = []
        self.retunes: list[Retune] = []
        self.failures = 0
        self.queries = 0
        self._executor: ThreadPoolExecutor | None = None
        self._inflight: Future | None = None
        self._lock = threading.Lock()

    def _now(self):
        return self.clock() if self.clock is not None else None

    def _log(self, kind, payload):
        if self.audit is not None:
            self.audit(kind, {"t_ms": self._now(), **payload})

    def on_enforcement(self, result: EnforcementResult) -> None:
        kpi = self.window.push(result)
        if kpi is not None:
            self.observe(kpi)

    def _request(self, kpi: float) -> KpDecisionRequest:
        return KpDecisionRequest(self.pcfg.kp, kpi, self.meta.target, tuple(self.memory.entries))

    def _decide(self, req: KpDecisionRequest) -> KpDecision:
        self.queries += 1
        if self.backend is None:
            return heuristic_decide(req, self.meta.kp_bounds, self.meta.initial_step)
        return llm_decide(req, self.backend, self.meta.kp_bounds)

    def observe(self, kpi: float) -> KpDecision | None:
        """Feed one cluster KPI; returns the applied decision, if any."""
        self.kpis.append(kpi)
        if kpi <= self.meta.tau:
            return None
        if self.meta.asynchronous:
            self._submit(kpi)
            return None
        self.memory.add(self.pcfg.kp, kpi)
        return self._run(self._request(kpi))

    def _run(self, req: KpDecisionRequest) -> KpDecision | None:
        try:
            decision = self._decide(req)
        except (BackendError, ExtractionError) as exc:
            self.failures += 1
            ex = getattr(exc, "exchange", None)
            if ex is not None:
                self._log("backend_exchange", {**ex.to_record(), "error": str(exc)})
            self._log("kp_decision", {"kpi": req.current_kpi, "old_kp": req.current_kp,
                                      "new_kp": None, "error": f"{type(exc).__name__}: {exc}"})
            log.warning("Kp decision failed (%s); keeping Kp=%s", exc, req.current_kp)
            return None
        if decision.exchange is not None:
            self._log("backend_exchange", decision.exchange.to_record())
        old = self.pcfg.kp
        new = self.pcfg.set_kp(decision.kp)
        self.retunes.append(Retune(req.current_kpi, old, new, self._now()))
        self._log("kp_decision", {"kpi": req.current_kpi, "old_kp": old, "new_kp": new,
                                  "clamped": decision.clamped, "raw_response": decision.raw_response,
                                  "memory": [list(e) for e in req.memory]})
        return decision

    def _submit(self, kpi: float) -> None:
        with self._lock:
            if self._inflight is not None and not self._inflight.done():
                return
            if self._executor is None:
                self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="kp-agent")
            self.memory.add(self.pcfg.kp, kpi)
            self._inflight = self._executor.submit(self._run, self._request(kpi))

    def wait(self, timeout: float | None = None) -> None:
        f = self._inflight
        if f is not None:
            f.result(timeout)

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
