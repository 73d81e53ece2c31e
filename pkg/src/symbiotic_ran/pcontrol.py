"""Proportional PRB controller and per-intent iteration accounting."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .channel import Simulation, SliceState, clamp_prb


@dataclass(frozen=True)
class Intent:
    """Throughput target with a symmetric acceptance band."""

    target: float
    tolerance: float = 5.0

    def __post_init__(self):
        if self.target < 0:
            raise ValueError("intent target must be >= 0")
        if self.tolerance <= 0:
            raise ValueError("intent tolerance must be > 0")

    @property
    def band(self) -> tuple[float, float]:
        return self.target - self.tolerance, self.target + self.tolerance

    def contains(self, throughput: float) -> bool:
        lo, hi = self.band
        return lo <= throughput <= hi


class PControlConfig:
    """Gain cell shared between the control loop and the meta-optimizer.

    ``kp`` may be replaced from another thread; the loop reads it once per
    control step, so a replacement lands on the next step boundary.
    """

    def __init__(self, kp: float = 0.75, max_iterations: int = 100,
                 kp_bounds: tuple[float, float] = (0.05, 10.0)):
        if max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        lo, hi = kp_bounds
        if not 0 < lo <= hi:
            raise ValueError(f"invalid kp_bounds {kp_bounds}")
        self.max_iterations = int(max_iterations)
        self.kp_bounds = (float(lo), float(hi))
        self._lock = threading.Lock()
        if not lo <= kp <= hi:
            raise ValueError(f"kp={kp} outside {kp_bounds}")
        self._kp = float(kp)

    @property
    def kp(self) -> float:
        return self._kp

    @kp.setter
    def kp(self, value: float) -> None:
        self.set_kp(value)

    def set_kp(self, value: float) -> float:
        lo, hi = self.kp_bounds
        with self._lock:
            self._kp = min(hi, max(lo, float(value)))
            return self._kp

    def __repr__(self):
        return f"PControlConfig(kp={self._kp}, max_iterations={self.max_iterations}, kp_bounds={self.kp_bounds})"


@dataclass
class EnforcementResult:
    iterations: int
    converged: bool
    final_throughput: float
    trajectory: list[tuple[int, float, float]] = field(default_factory=list)
    intent: Optional[Intent] = None
    kp: Optional[float] = None
    start_time: int = 0


def control_step(state: SliceState, intent: Intent, kp: float) -> float:
    """One proportional update: ``prb + kp * (target - throughput)``, clamped."""
    error = intent.target - state.throughput
    return clamp_prb(state.prb_fraction + kp * error)


AuditHook = Callable[[str, dict], None]


def enforce_intent(sim: Simulation, intent: Intent, cfg: PControlConfig,
                   audit: AuditHook | None = None) -> EnforcementResult:
    """Drive the slice into the intent band.

    Each iteration commands a new PRB, waits out the reaction delay and
    checks the measured throughput. An enforcement that starts inside the
    band still costs one iteration.
    """
    wait = max(sim.model.reaction_delay, 1)
    start = sim.now
    trajectory = []
    iterations = 0
    converged = False
    kp = cfg.kp
    while iterations < cfg.max_iterations:
        kp = cfg.kp
        new_prb = control_step(sim.state, intent, kp)
        sim.enforce(new_prb)
        iterations += 1
        sim.advance(wait)
        trajectory.append((sim.now, sim.prb, sim.throughput))
        if audit is not None:
            audit("control_step", {"t_ms": sim.now, "iteration": iterations, "kp": kp,
                                   "prb": sim.prb, "throughput": sim.throughput,
                                   "target": intent.target})
        if intent.contains(sim.throughput):
            converged = True
            break
    result = EnforcementResult(iterations, converged, sim.throughput, trajectory,
                               intent, kp, start)
    if audit is not None:
        audit("enforcement", {"t_ms": sim.now, "start_ms": start, "iterations": iterations,
                              "converged": converged, "final_throughput": sim.throughput,
                              "target": intent.target, "kp": kp})
    return result


class KpiWindow:
    """Cluster of the last ``n`` enforcements; emits their mean iteration count."""

    def __init__(self, n: int = 4):
        if n < 1:
            raise ValueError("window size must be >= 1")
        self.n = n
        self.cluster: list[EnforcementResult] = []
        self.last_kpi: float | None = None

    def push(self, result: EnforcementResult) -> float | None:
        self.cluster.append(result)
        if len(self.cluster) < self.n:
            return None
        kpi = sum(r.iterations for r in self.cluster) / len(self.cluster)
        self.cluster = []
        self.last_kpi = kpi
        return kpi


def push_kpi(window: KpiWindow, result: EnforcementResult) -> KpiWindow:
    window.push(result)
    return window


Enforcer = Callable[[Simulation, Intent], EnforcementResult]


class ControlLoop:
    """Keeps a slice inside its current intent band along a trace.

    A new enforcement starts whenever the intent changes or the measured
    throughput leaves the band. Between enforcements the simulation jumps
    from one trace change to the next, since throughput is constant there.
    """

    def __init__(self, sim: Simulation, enforcer: Enforcer,
                 on_result: Callable[[EnforcementResult], bool | None] | None = None):
        self.sim = sim
        self.enforcer = enforcer
        self.on_result = on_result
        self.intent: Intent | None = None
        self.results: list[EnforcementResult] = []
        self._dirty = False

    def set_intent(self, intent: Intent | None) -> None:
        self.intent = intent
        self._dirty = intent is not None

    def switch_off(self) -> None:
        self.intent = None
        self._dirty = False
        self.sim.set_prb_now(0.0)

    def run_until(self, t_end: int) -> bool:
        """Run to ``t_end``; returns True if ``on_result`` asked to stop early."""
        sim = self.sim
        while sim.now < t_end:
            if self.intent is not None and (self._dirty or not self.intent.contains(sim.throughput)):
                self._dirty = False
                result = self.enforcer(sim, self.intent)
                self.results.append(result)
                if self.on_result is not None and self.on_result(result):
                    return True
                continue
            nxt = sim.trace.next_change(sim.now)
            sim.advance_to(t_end if nxt is None else min(nxt, t_end))
        return False


def pcontrol_enforcer(cfg: PControlConfig, audit: AuditHook | None = None) -> Enforcer:
    return lambda sim, intent: enforce_intent(sim, intent, cfg, audit)
