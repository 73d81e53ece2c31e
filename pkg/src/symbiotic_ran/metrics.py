"""Tracking errors, iteration statistics and PRB accounting."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .audit import AuditRecord
from .channel import Trajectory
from .pcontrol import Intent

DEFAULT_CADENCE_MS = 5

IntentSchedule = Sequence[tuple[int, "Intent | None"]]


def _window(traj: Trajectory, window):
    if not len(traj):
        raise ValueError("empty trajectory")
    t0, t1 = window if window is not None else (traj.start, traj.end)
    if t1 <= t0:
        t1 = t0 + 1
    return int(t0), int(t1)


def rmse(trajectory: Trajectory | Sequence[float], intent: Intent | float,
         window: tuple[int, int] | None = None, cadence: int = DEFAULT_CADENCE_MS) -> float:
    """Root-mean-square distance of throughput from the intent target.

    A :class:`Trajectory` is sampled every ``cadence`` ms over ``window``;
    a plain sequence is taken as the samples themselves.
    """
    target = intent.target if isinstance(intent, Intent) else float(intent)
    if isinstance(trajectory, Trajectory):
        _, _, tp = trajectory.sample(*_window(trajectory, window), cadence)
    else:
        tp = np.asarray(trajectory, dtype=float)
    if tp.size == 0:
        raise ValueError("no samples")
    return float(np.sqrt(np.mean((tp - target) ** 2)))


def schedule_errors(trajectory: Trajectory, schedule: IntentSchedule,
                    window: tuple[int, int] | None = None,
                    cadence: int = DEFAULT_CADENCE_MS) -> np.ndarray:
    """Throughput minus the active target, at every sample with an active intent."""
    ts, _, tp = trajectory.sample(*_window(trajectory, window), cadence)
    starts = np.asarray([t for t, _ in schedule])
    targets = np.asarray([np.nan if i is None else i.target for _, i in schedule])
    idx = np.searchsorted(starts, ts, side="right") - 1
    active = idx >= 0
    tgt = np.full(ts.shape, np.nan)
    tgt[active] = targets[idx[active]]
    keep = ~np.isnan(tgt)
    return tp[keep] - tgt[keep]


def rmse_schedule(trajectory: Trajectory, schedule: IntentSchedule,
                  window: tuple[int, int] | None = None, cadence: int = DEFAULT_CADENCE_MS) -> float:
    err = schedule_errors(trajectory, schedule, window, cadence)
    if err.size == 0:
        raise ValueError("no samples with an active intent")
    return float(np.sqrt(np.mean(err ** 2)))


def mae(values: Sequence[float], reference: float) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    return float(np.mean(np.abs(v - reference)))


def prb_integral(trajectory: Trajectory, window: tuple[int, int] | None = None) -> float:
    """Exact integral of the PRB step signal, in %-seconds."""
    t0, t1 = _window(trajectory, window)
    times = np.asarray(trajectory.times)
    if t0 < times[0]:
        raise ValueError("window starts before the trajectory")
    edges = np.clip(np.append(times, t1), t0, t1)
    widths = np.diff(edges)
    return float(np.dot(np.asarray(trajectory.prb), widths)) / 1000.0


def prb_savings(run: Trajectory, baseline: Trajectory,
                window: tuple[int, int] | None = None) -> float:
    """Percent of baseline PRB-time not used by ``run`` over a common window."""
    if window is None:
        if (run.start, run.end) != (baseline.start, baseline.end):
            raise ValueError(f"mismatched windows: run {(run.start, run.end)} vs "
                             f"baseline {(baseline.start, baseline.end)}")
        window = (run.start, run.end)
    else:
        for tr in (run, baseline):
            if tr.start > window[0] or tr.end < window[1]:
                raise ValueError(f"trajectory {(tr.start, tr.end)} does not cover {window}")
    base = prb_integral(baseline, window)
    if base <= 0:
        raise ValueError("baseline uses no PRBs")
    return 100.0 * (1.0 - prb_integral(run, window) / base)


def mean_sd(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class MetricsReport:
    rmse: float | None = None
    mae: float | None = None
    iterations_mean: float | None = None
    iterations_sd: float | None = None
    rounds_mean: float | None = None
    rounds_sd: float | None = None
    convergence_time_ms: float | None = None
    negotiation_time_ms: float | None = None
    prb_time_integral: float | None = None
    prb_savings_percent: float | None = None
    enforcements: int = 0
    retunes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(self)]
        w.writerow(names)
        w.writerow(["" if getattr(self, n) is None else getattr(self, n) for n in names])
        return buf.getvalue()

    def table(self) -> str:
        rows = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = "-"
            elif isinstance(v, float):
                text = f"{v:.3f}"
            else:
                text = str(v)
            rows.append((f.name, text))
        width = max(len(n) for n, _ in rows)
        return "\n".join(f"{n:<{width}}  {t}" for n, t in rows)


def enforcement_stats(iterations: Sequence[int], durations_ms: Sequence[float]) -> dict:
    mean, sd = mean_sd(iterations)
    return {"iterations_mean": mean, "iterations_sd": sd,
            "convergence_time_ms": float(np.mean(durations_ms)) if len(durations_ms) else None,
            "enforcements": len(iterations)}


def report_from_audit(records: Sequence[AuditRecord], cadence: int = DEFAULT_CADENCE_MS) -> MetricsReport:
    """Recompute a run's metrics from its audit records alone."""
    enf = [r for r in records if r.kind == "enforcement"]
    rounds = [r for r in records if r.kind == "negotiation_round"]
    rep = MetricsReport(**enforcement_stats(
        [r.payload["iterations"] for r in enf], [r.t_ms - r.payload["start_ms"] for r in enf]))
    rep.retunes = sum(1 for r in records if r.kind == "kp_decision" and r.payload.get("new_kp") is not None)
    games: dict = {}
    for r in rounds:
        games.setdefault(r.payload.get("game", 0), []).append(r)
    if games:
        rep.rounds_mean, rep.rounds_sd = mean_sd([len(v) for v in games.values()])
        rep.negotiation_time_ms = float(np.mean([sum(r.payload["wall_time_ms"] for r in v)
                                                 for v in games.values()]))
        ref = [r.payload.get("reference") for r in rounds]
        if all(x is not None for x in ref):
            errs = [abs(p["throughput"] - x) for r, x in zip(rounds, ref) for p in r.payload["proposals"]]
            rep.mae = float(np.mean(errs)) if errs else None
    traj = [r for r in records if r.kind == "trajectory"]
    if traj:
        p = traj[-1].payload
        tr = trajectory_from_payload(p["run"])
        window = tuple(p["window"]) if p.get("window") else None
        schedule = [(t, None if tgt is None else Intent(tgt, tol)) for t, tgt, tol in p["intents"]]
        if any(i is not None for _, i in schedule):
            rep.rmse = rmse_schedule(tr, schedule, window, cadence)
        rep.prb_time_integral = prb_integral(tr, window)
        if p.get("baseline") is not None:
            rep.prb_savings_percent = prb_savings(tr, trajectory_from_payload(p["baseline"]), window)
    return rep


def trajectory_payload(tr: Trajectory) -> dict:
    return {"times": list(tr.times), "prb": list(tr.prb), "throughput": list(tr.throughput),
            "mcs": list(tr.mcs), "end": tr.end}


def trajectory_from_payload(p: dict) -> Trajectory:
    return Trajectory.from_steps(p["times"], p["prb"], p["throughput"], p["end"], p["mcs"])
