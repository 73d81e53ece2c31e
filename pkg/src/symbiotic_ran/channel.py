"""
Sliced RAN downlink simulator.

A slice is driven by an MCS trace (zero-order hold playback) and a PRB
share in percent. Throughput is ``capacity(mcs) * prb / 100``; PRB
enforcements land after the link's reaction delay.

All times are integer milliseconds.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MCS_MIN = 0
MCS_MAX = 28
FULL_PRB_CAPACITY_MBPS = 120.0
DEFAULT_REACTION_DELAY_MS = 5


class TraceError(ValueError):
    """Malformed, empty or out-of-domain channel trace."""


def linear_capacity_table(peak_mbps: float = FULL_PRB_CAPACITY_MBPS) -> dict[int, float]:
    """Full-PRB capacity growing linearly with MCS, ``peak * m / 28``."""
    return {m: peak_mbps * m / MCS_MAX for m in range(MCS_MIN, MCS_MAX + 1)}


@dataclass(frozen=True)
class ChannelTrace:
    times: tuple[int, ...]
    mcs: tuple[int, ...]
    id: str = "trace"

    def __post_init__(self):
        if len(self.times) == 0:
            raise TraceError("empty trace")
        if len(self.times) != len(self.mcs):
            raise TraceError("times and mcs lengths differ")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise TraceError(f"timestamps must be strictly increasing ({a} -> {b})")
        for m in self.mcs:
            if not MCS_MIN <= m <= MCS_MAX:
                raise TraceError(f"mcs {m} outside [{MCS_MIN}, {MCS_MAX}]")

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[int, int]], id: str = "trace") -> "ChannelTrace":
        return cls(tuple(int(t) for t, _ in samples), tuple(int(m) for _, m in samples), id)

    @property
    def start(self) -> int:
        return self.times[0]

    @property
    def end(self) -> int:
        return self.times[-1]

    def samples(self) -> list[tuple[int, int]]:
        return list(zip(self.times, self.mcs))

    def next_change(self, t: int) -> int | None:
        """Time of the first sample strictly after ``t``, or None."""
        i = bisect_right(self.times, t)
        return self.times[i] if i < len(self.times) else None

    def __len__(self):
        return len(self.times)


def mcs_at(trace: ChannelTrace, t: int) -> int:
    """MCS of the latest sample at or before ``t``."""
    if t < trace.start:
        raise ValueError(f"t={t} precedes trace start {trace.start}")
    return trace.mcs[bisect_right(trace.times, t) - 1]


def load_trace(path: str | Path, id: str | None = None) -> ChannelTrace:
    """Read a ``time_ms,mcs`` CSV trace."""
    path = Path(path)
    samples = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError(f"{path}: empty trace file")
        if [h.strip() for h in header] != ["time_ms", "mcs"]:
            raise TraceError(f"{path}: expected header 'time_ms,mcs', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise TraceError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                samples.append((int(row[0]), int(row[1])))
            except ValueError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from None
    return ChannelTrace.from_samples(samples, id=id or path.stem)


def save_trace(trace: ChannelTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_ms", "mcs"])
        writer.writerows(trace.samples())


@dataclass(frozen=True)
class LinkModel:
    capacity_table: Mapping[int, float] = field(default_factory=linear_capacity_table)
    reaction_delay: int = DEFAULT_REACTION_DELAY_MS

    def __post_init__(self):
        if self.reaction_delay < 0:
            raise ValueError("reaction_delay must be >= 0")
        keys = sorted(self.capacity_table)
        caps = [self.capacity_table[k] for k in keys]
        if any(b < a for a, b in zip(caps, caps[1:])):
            raise ValueError("capacity must be non-decreasing in mcs")

    def capacity(self, mcs: int) -> float:
        return float(self.capacity_table[mcs])

    @classmethod
    def from_config(cls, cfg: Mapping | None) -> "LinkModel":
        cfg = dict(cfg or {})
        table = cfg.get("capacity_table")
        if table is None:
            table = linear_capacity_table(float(cfg.get("peak_mbps", FULL_PRB_CAPACITY_MBPS)))
        else:
            table = {int(k): float(v) for k, v in table.items()}
        return cls(table, int(cfg.get("reaction_delay_ms", DEFAULT_REACTION_DELAY_MS)))


@dataclass(frozen=True)
class SliceState:
    prb_fraction: float = 100.0
    throughput: float = 0.0
    time: int = 0
    pending_prb: tuple[float, int] | None = None

    def __post_init__(self):
        if not 0.0 <= self.prb_fraction <= 100.0:
            raise ValueError(f"prb_fraction {self.prb_fraction} outside [0, 100]")
        if self.throughput < 0:
            raise ValueError("throughput must be >= 0")


def clamp_prb(value: float) -> float:
    if math.isnan(value):
        raise ValueError("PRB target is NaN")
    return min(100.0, max(0.0, float(value)))


def step(state: SliceState, model: LinkModel, mcs: int, dt: int) -> SliceState:
    """Advance ``dt`` ms; apply a due enforcement and refresh throughput."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    now = state.time + int(dt)
    prb, pending = state.prb_fraction, state.pending_prb
    if pending is not None and pending[1] <= now:
        prb, pending = pending[0], None
    return SliceState(prb, model.capacity(mcs) * prb / 100.0, now, pending)


def enforce_prb(state: SliceState, target: float, model: LinkModel) -> SliceState:
    """Schedule ``target`` (clamped) to take effect after the reaction delay."""
    return replace(state, pending_prb=(clamp_prb(target), state.time + model.reaction_delay))


class Trajectory:
    """Piecewise-constant record of (time, prb, throughput) change points."""

    def __init__(self):
        self.times: list[int] = []
        self.prb: list[float] = []
        self.throughput: list[float] = []
        self.mcs: list[int] = []
        self.end: int | None = None

    @classmethod
    def from_steps(cls, times, prb, throughput, end: int, mcs=None) -> "Trajectory":
        traj = cls()
        mcs = mcs if mcs is not None else [0] * len(times)
        for row in zip(times, prb, throughput, mcs):
            traj.record(int(row[0]), float(row[1]), float(row[2]), int(row[3]))
        traj.end = int(end)
        return traj

    @property
    def start(self) -> int | None:
        return self.times[0] if self.times else None

    def record(self, t: int, prb: float, tp: float, mcs: int) -> None:
        self.end = t if self.end is None else max(self.end, t)
        if self.times and self.times[-1] == t:
            self.prb[-1], self.throughput[-1], self.mcs[-1] = prb, tp, mcs
            return
        if self.times and self.prb[-1] == prb and self.throughput[-1] == tp and self.mcs[-1] == mcs:
            return
        self.times.append(t)
        self.prb.append(prb)
        self.throughput.append(tp)
        self.mcs.append(mcs)

    def __len__(self):
        return len(self.times)

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.times, self.prb, self.throughput))

    def sample(self, t0: int, t1: int, cadence: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Zero-order-hold samples at ``t0, t0+cadence, ... < t1``."""
        ts = np.arange(t0, t1, cadence)
        idx = np.searchsorted(np.asarray(self.times), ts, side="right") - 1
        if len(ts) and idx[0] < 0:
            raise ValueError("sampling window starts before the trajectory")
        return ts, np.asarray(self.prb)[idx], np.asarray(self.throughput)[idx]


class Simulation:
    """A running slice: trace playback, link model and a mutable state."""

    def __init__(self, trace: ChannelTrace, model: LinkModel | None = None,
                 initial_prb: float = 100.0, start: int | None = None):
        self.trace = trace
        self.model = model or LinkModel()
        t0 = trace.start if start is None else int(start)
        prb = clamp_prb(initial_prb)
        mcs = mcs_at(trace, t0)
        self.state = SliceState(prb, self.model.capacity(mcs) * prb / 100.0, t0)
        self.trajectory = Trajectory()
        self.trajectory.record(t0, prb, self.state.throughput, mcs)

    @property
    def now(self) -> int:
        return self.state.time

    @property
    def throughput(self) -> float:
        return self.state.throughput

    @property
    def prb(self) -> float:
        return self.state.prb_fraction

    def mcs(self) -> int:
        return mcs_at(self.trace, self.now)

    def capacity(self) -> float:
        return self.model.capacity(self.mcs())

    def enforce(self, target: float) -> None:
        self.state = enforce_prb(self.state, target, self.model)
        if self.model.reaction_delay == 0:
            self._refresh()

    def set_prb_now(self, prb: float) -> None:
        """Bypass the reaction delay (slice switch-off / hard reset)."""
        self.state = replace(self.state, prb_fraction=clamp_prb(prb), pending_prb=None)
        self._refresh()

    def _refresh(self) -> None:
        s = self.state
        if s.pending_prb is not None and s.pending_prb[1] <= s.time:
            s = replace(s, prb_fraction=s.pending_prb[0], pending_prb=None)
        mcs = self.mcs()
        self.state = replace(s, throughput=self.model.capacity(mcs) * s.prb_fraction / 100.0)
        self.trajectory.record(self.now, self.prb, self.throughput, mcs)

    def advance(self, dt: int) -> None:
        """Advance ``dt`` ms, splitting at trace changes and enforcement times."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        end = self.now + int(dt)
        while self.now < end:
            nxt = end
            change = self.trace.next_change(self.now)
            if change is not None and change < nxt:
                nxt = change
            pending = self.state.pending_prb
            if pending is not None and self.now < pending[1] < nxt:
                nxt = pending[1]
            self.state = step(self.state, self.model, mcs_at(self.trace, nxt), nxt - self.now)
            self.trajectory.record(self.now, self.prb, self.throughput, self.mcs())

    def advance_to(self, t: int) -> None:
        if t > self.now:
            self.advance(t - self.now)


def step_trace(segments: Sequence[tuple[int, int]], id: str = "steps") -> ChannelTrace:
    """Trace from ``(start_ms, mcs)`` segments."""
    return ChannelTrace.from_samples(segments, id=id)


def synthetic_dip_trace(duration_ms: int = 60_000, high: int = 24, low: int = 10,
                        dip: tuple[float, float] = (1 / 3, 2 / 3), hold_ms: int = 500,
                        spread: int = 4, seed: int = 0, id: str | None = None) -> ChannelTrace:
    """Vehicle-route-like trace: MCS jitters around ``high`` with a coverage
    dip around ``low`` over the ``dip`` fraction of the route."""
    rng = np.random.default_rng(seed)
    samples = []
    for t in range(0, duration_ms, hold_ms):
        in_dip = dip[0] * duration_ms <= t < dip[1] * duration_ms
        centre = low if in_dip else high
        m = int(np.clip(centre + rng.integers(-spread, spread + 1), MCS_MIN, MCS_MAX))
        if not samples or samples[-1][1] != m:
            samples.append((t, m))
    return ChannelTrace.from_samples(samples, id=id or f"dip-{seed}")
