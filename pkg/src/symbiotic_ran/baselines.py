"""
Comparison controllers: tabular Q-learning and a GP-surrogate PRB search.

Both follow the P-controller's contract: every probe is a PRB command that
lands after the reaction delay, and each probe counts as one iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Simulation, clamp_prb
from .pcontrol import AuditHook, EnforcementResult, Intent


@dataclass
class QLearnConfig:
    """Error buckets (Mbps, on ``target - throughput``) and PRB-delta actions."""

    error_edges: tuple[float, ...] = (-40.0, -20.0, -10.0, -5.0, 5.0, 10.0, 20.0, 40.0)
    actions: tuple[float, ...] = (-20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0)
    learning_rate: float = 0.5
    discount: float = 0.6
    epsilon: float = 0.3
    epsilon_decay: float = 0.9
    epsilon_min: float = 0.02
    max_iterations: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.actions:
            raise ValueError("need at least one action")
        if list(self.error_edges) != sorted(self.error_edges):
            raise ValueError("error_edges must be increasing")
        for name in ("epsilon", "epsilon_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must be in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def n_states(self) -> int:
        return len(self.error_edges) + 1


class QLearner:
    """Q-table and exploration state shared across enforcements."""

    def __init__(self, cfg: QLearnConfig | None = None):
        self.cfg = cfg or QLearnConfig()
        self.q = np.zeros((self.cfg.n_states, len(self.cfg.actions)))
        self.rng = np.random.default_rng(self.cfg.seed)
        self.episodes = 0

    @property
    def epsilon(self) -> float:
        c = self.cfg
        return max(c.epsilon_min, c.epsilon * c.epsilon_decay ** self.episodes)

    def state(self, intent: Intent, throughput: float) -> int:
        return int(np.searchsorted(self.cfg.error_edges, intent.target - throughput, side="right"))

    def act(self, s: int) -> int:
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(len(self.cfg.actions)))
        row = self.q[s]
        best = np.flatnonzero(row == row.max())
        return int(best[0]) if len(best) == 1 else int(self.rng.choice(best))

    def update(self, s: int, a: int, r: float, s2: int, terminal: bool) -> None:
        c = self.cfg
        future = 0.0 if terminal else c.discount * self.q[s2].max()
        self.q[s, a] += c.learning_rate * (r + future - self.q[s, a])


def qlearn_enforce(sim: Simulation, intent: Intent, cfg: QLearnConfig | None = None,
                   learner: QLearner | None = None, audit: AuditHook | None = None) -> EnforcementResult:
    """Epsilon-greedy Q-learning over PRB deltas until the throughput is in band.

    Pass the same ``learner`` across calls to keep learning online.
    """
    learner = learner or QLearner(cfg)
    cfg = learner.cfg
    wait = max(sim.model.reaction_delay, 1)
    start, trajectory = sim.now, []
    iterations, converged = 0, False
    while iterations < cfg.max_iterations:
        s = learner.state(intent, sim.throughput)
        a = learner.act(s)
        sim.enforce(clamp_prb(sim.prb + cfg.actions[a]))
        iterations += 1
        sim.advance(wait)
        trajectory.append((sim.now, sim.prb, sim.throughput))
        converged = intent.contains(sim.throughput)
        reward = 1.0 if converged else -abs(intent.target - sim.throughput) / intent.tolerance
        learner.update(s, a, reward, learner.state(intent, sim.throughput), converged)
        if audit is not None:
            audit("control_step", {"t_ms": sim.now, "iteration": iterations, "controller": "qlearn",
                                   "prb": sim.prb, "throughput": sim.throughput, "target": intent.target})
        if converged:
            break
    learner.episodes += 1
    if audit is not None:
        audit("enforcement", {"t_ms": sim.now, "start_ms": start, "iterations": iterations,
                              "converged": converged, "final_throughput": sim.throughput,
                              "target": intent.target, "controller": "qlearn"})
    return EnforcementResult(iterations, converged, sim.throughput, trajectory, intent, None, start)


@dataclass
class BayesOptConfig:
    budget: int = 20
    prb_bounds: tuple[float, float] = (0.0, 100.0)
    exploration: float = 2.0
    length_scale: float = 20.0
    signal_sd: float = 40.0
    noise_sd: float = 0.5
    grid_points: int = 201

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        lo, hi = self.prb_bounds
        if not 0 <= lo < hi <= 100:
            raise ValueError(f"invalid prb_bounds {self.prb_bounds}")
        if self.exploration < 0:
            raise ValueError("exploration must be >= 0")


@dataclass
class GpSurrogate:
    """1-D Gaussian-process regression of throughput on PRB, constant prior mean."""

    length_scale: float
    signal_sd: float
    noise_sd: float
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)

    def add(self, x: float, y: float) -> None:
        self.x.append(float(x))
        self.y.append(float(y))

    def _k(self, a, b):
        d = (np.asarray(a)[:, None] - np.asarray(b)[None, :]) / self.length_scale
        return self.signal_sd ** 2 * np.exp(-0.5 * d * d)

    def predict(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=float)
        if not self.x:
            return np.zeros_like(xs), np.full_like(xs, self.signal_sd)
        X, Y = np.asarray(self.x), np.asarray(self.y)
        m0 = Y.mean()
        K = self._k(X, X) + self.noise_sd ** 2 * np.eye(len(X))
        Ks = self._k(xs, X)
        L = np.linalg.cholesky(K)
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, Y - m0))
        mu = m0 + Ks @ alpha
        v = np.linalg.solve(L, Ks.T)
        var = np.maximum(self.signal_sd ** 2 - np.sum(v * v, axis=0), 0.0)
        return mu, np.sqrt(var)


def next_probe(gp: GpSurrogate, intent: Intent, cfg: BayesOptConfig) -> float:
    """Optimistic pick: smallest ``|mu - target| - kappa * sigma`` on a PRB grid.

    With no observations this is the middle of the PRB range.
    """
    lo, hi = cfg.prb_bounds
    if not gp.x:
        return (lo + hi) / 2
    grid = np.linspace(lo, hi, cfg.grid_points)
    mu, sd = gp.predict(grid)
    score = np.abs(mu - intent.target) - cfg.exploration * sd
    return float(grid[int(np.argmin(score))])


def bayes_enforce(sim: Simulation, intent: Intent, cfg: BayesOptConfig | None = None,
                  audit: AuditHook | None = None) -> EnforcementResult:
    """Probe PRB values picked by a GP surrogate until one lands in band."""
    cfg = cfg or BayesOptConfig()
    gp = GpSurrogate(cfg.length_scale, cfg.signal_sd, cfg.noise_sd)
    wait = max(sim.model.reaction_delay, 1)
    start, trajectory = sim.now, []
    iterations, converged = 0, False
    while iterations < cfg.budget:
        prb = next_probe(gp, intent, cfg)
        sim.enforce(prb)
        iterations += 1
        sim.advance(wait)
        gp.add(sim.prb, sim.throughput)
        trajectory.append((sim.now, sim.prb, sim.throughput))
        if audit is not None:
            audit("control_step", {"t_ms": sim.now, "iteration": iterations, "controller": "bayes",
                                   "prb": sim.prb, "throughput": sim.throughput, "target": intent.target})
        if intent.contains(sim.throughput):
            converged = True
            break
    if audit is not None:
        audit("enforcement", {"t_ms": sim.now, "start_ms": start, "iterations": iterations,
                              "converged": converged, "final_throughput": sim.throughput,
                              "target": intent.target, "controller": "bayes"})
    return EnforcementResult(iterations, converged, sim.throughput, trajectory, intent, None, start)
