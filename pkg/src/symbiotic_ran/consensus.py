"""
Side-car consensus optimizer for SLA negotiations.

Each tenant ``i`` has a concave utility ``-alpha_i (x_i - d_i)^2`` around its
demand; the mediator penalizes bid spread and distance of the mean bid from
its own target. Gradient descent on the per-agent bids finds the consensus
SLA, and jittered restarts turn it into a confidence interval.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

Z95 = 1.96


class ConsensusError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConsensusProblem:
    """Utility model parameters.

    Parameters
    ----------
    demands : sequence of float
        Desired SLA of every tenant, Mbps.
    alphas : float or sequence of float
        Per-tenant sensitivity to deviating from its demand.
    gamma, beta : float
        Mediator weights on bid spread and on alignment with ``x_target``.
    lam : float
        Weight of the mediator utility in the combined objective. The
        gradient iteration itself does not use it.
    x_target : float
        Mediator's preferred SLA, Mbps.
    eta, epsilon : float
        Step size, and the spread below which bids count as agreed.
    step_tol : float
        Bids must also have stopped moving (max step below this) before the
        average is returned.
    """

    demands: tuple[float, ...]
    alphas: tuple[float, ...] | float = 0.5
    gamma: float = 100.0
    beta: float = 1.0
    lam: float = 1.0
    x_target: float = 55.0
    eta: float = 0.004
    epsilon: float = 0.5
    sla_range: tuple[float, float] = (0.0, 100.0)
    step_tol: float = 1e-4

    def __post_init__(self):
        d = tuple(float(v) for v in np.atleast_1d(self.demands))
        if not d:
            raise ValueError("need at least one demand")
        a = np.broadcast_to(np.asarray(self.alphas, dtype=float), (len(d),))
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "alphas", tuple(float(v) for v in a))
        lo, hi = self.sla_range
        if lo >= hi:
            raise ValueError("empty sla_range")
        if min(self.alphas) <= 0 or self.gamma <= 0 or self.beta <= 0:
            raise ValueError("alphas, gamma and beta must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if any(not lo <= v <= hi for v in d) or not lo <= self.x_target <= hi:
            raise ValueError(f"demands and x_target must lie in {self.sla_range}")

    @property
    def n(self) -> int:
        return len(self.demands)

    def with_demands(self, demands: Sequence[float]) -> "ConsensusProblem":
        alphas = self.alphas if len(demands) == self.n else self.alphas[0]
        return replace(self, demands=tuple(demands), alphas=alphas)


@dataclass
class ConsensusResult:
    value: float
    iterations: int
    converged: bool
    trajectory: list[np.ndarray] | None = None


def _vec(problem: ConsensusProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"expected {problem.n} bids, got shape {x.shape}")
    return x


def utilities(problem: ConsensusProblem, x) -> tuple[np.ndarray, float, float]:
    """Tenant utilities, mediator utility and their combination."""
    x = _vec(problem, x)
    d = np.asarray(problem.demands)
    a = np.asarray(problem.alphas)
    individual = -a * (x - d) ** 2
    xbar = x.mean()
    glob = -problem.gamma * np.sum((x - xbar) ** 2) - problem.beta * (xbar - problem.x_target) ** 2
    return individual, float(glob), float(individual.sum() + problem.lam * glob)


def combined_objective(problem: ConsensusProblem, x) -> float:
    return utilities(problem, x)[2]


def objective_gradient(problem: ConsensusProblem, x) -> np.ndarray:
    """Analytic gradient of :func:`combined_objective`.

    The spread term's dependence through the mean cancels, leaving
    ``-2 gamma (x_i - xbar)``; the alignment term contributes
    ``-2 beta (xbar - target) / n`` to every coordinate.
    """
    x = _vec(problem, x)
    d = np.asarray(problem.demands)
    a = np.asarray(problem.alphas)
    xbar = x.mean()
    g_global = -2 * problem.gamma * (x - xbar) - 2 * problem.beta * (xbar - problem.x_target) / problem.n
    return -2 * a * (x - d) + problem.lam * g_global


def update_direction(problem: ConsensusProblem, x) -> np.ndarray:
    """Bracket of the per-agent update (the quantity scaled by ``eta``)."""
    x = _vec(problem, x)
    xbar = x.mean()
    return (2 * np.asarray(problem.alphas) * (x - np.asarray(problem.demands))
            + 2 * problem.gamma * (x - xbar) + problem.beta * (xbar - problem.x_target))


def descent_potential(problem: ConsensusProblem, x) -> float:
    """Function whose gradient is :func:`update_direction`.

    Equals ``-combined_objective`` when ``lam == 1`` and ``n == 2``; for
    other ``n`` the alignment weight differs by ``n / 2``.
    """
    x = _vec(problem, x)
    xbar = x.mean()
    return float(np.sum(np.asarray(problem.alphas) * (x - np.asarray(problem.demands)) ** 2)
                 + problem.gamma * np.sum((x - xbar) ** 2)
                 + problem.n * problem.beta / 2 * (xbar - problem.x_target) ** 2)


def stationary_point(problem: ConsensusProblem) -> np.ndarray:
    """Unclamped fixed point of the update, by solving the linear system."""
    n = problem.n
    a = np.asarray(problem.alphas)
    g, b = problem.gamma, problem.beta
    M = np.diag(2 * a + 2 * g) + np.full((n, n), (b - 2 * g) / n)
    rhs = 2 * a * np.asarray(problem.demands) + b * problem.x_target
    return np.linalg.solve(M, rhs)


def _gd_batch(problem: ConsensusProblem, D: np.ndarray, X0: np.ndarray, max_iters: int,
              record: bool = False):
    """Run the update on ``R`` independent rows at once.

    Returns (values, iterations, converged, trajectory-or-None). A row stops
    when its bids agree within ``epsilon`` and have stopped moving, or when
    they stopped moving without agreeing (not converged).
    """
    lo, hi = problem.sla_range
    A = np.asarray(problem.alphas)
    g, b, T, eta = problem.gamma, problem.beta, problem.x_target, problem.eta
    Xa = np.clip(np.array(X0, dtype=float), lo, hi)
    Da = np.asarray(D, dtype=float)
    R = Xa.shape[0]
    values = np.full(R, np.nan)
    iters = np.full(R, max_iters)
    converged = np.zeros(R, dtype=bool)
    idx = np.arange(R)
    traj = [Xa[0].copy()] if record else None
    for k in range(max_iters + 1):
        xbar = Xa.mean(axis=1, keepdims=True)
        grad = 2 * A * (Xa - Da) + 2 * g * (Xa - xbar) + b * (xbar - T)
        Xn = np.clip(Xa - eta * grad, lo, hi)
        if not np.isfinite(Xn).all():
            raise FloatingPointError(f"non-finite iterate at step {k}")
        still = np.abs(Xn - Xa).max(axis=1) < problem.step_tol
        if k == max_iters:
            still[:] = True
        if still.any():
            # finished rows report the average of their last accepted iterate
            spread = np.abs(Xa[still] - xbar[still]).max(axis=1)
            done = idx[still]
            values[done] = xbar[still, 0]
            iters[done] = k
            converged[done] = (spread < problem.epsilon) & (np.abs(Xn[still] - Xa[still]).max(axis=1)
                                                            < problem.step_tol)
            keep = ~still
            Xn, Da, idx = Xn[keep], Da[keep], idx[keep]
            if not idx.size:
                break
        Xa = Xn
        if record and idx[0] == 0:
            traj.append(Xa[0].copy())
    return values, iters, converged, traj


def gd_consensus(problem: ConsensusProblem, x0=None, max_iters: int = 20_000,
                 record: bool = False) -> ConsensusResult:
    """Clamped gradient consensus from ``x0`` (defaults to the demands)."""
    x0 = np.asarray(problem.demands if x0 is None else x0, dtype=float)
    _vec(problem, x0)
    lo, hi = problem.sla_range
    if (x0 < lo).any() or (x0 > hi).any():
        raise ValueError("x0 outside sla_range")
    D = np.asarray(problem.demands)[None, :]
    v, it, conv, traj = _gd_batch(problem, D, x0[None, :], max_iters, record)
    return ConsensusResult(float(v[0]), int(it[0]), bool(conv[0]), traj)


@dataclass(frozen=True)
class JitterSpec:
    distribution: str = "gaussian"
    scale: float = 5.0
    seed: int | None = 0

    def __post_init__(self):
        if self.distribution not in ("gaussian", "uniform"):
            raise ValueError(f"unknown jitter distribution {self.distribution!r}")
        if self.scale < 0:
            raise ValueError("jitter scale must be >= 0")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.distribution == "gaussian":
            return rng.normal(0.0, self.scale, shape)
        return rng.uniform(-self.scale, self.scale, shape)


@dataclass
class ConfidenceInterval:
    mean: float
    half_width: float
    lower: float
    upper: float
    r: int
    sd: float
    excluded: int = 0
    samples: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @classmethod
    def from_samples(cls, samples, excluded: int = 0, z: float = Z95) -> "ConfidenceInterval":
        s = np.asarray(samples, dtype=float)
        if s.size == 0:
            raise ValueError("no samples")
        mean = float(s.mean())
        if s.size == 1:
            log.warning("single restart: standard deviation undefined, using 0")
            sd = 0.0
        elif np.ptp(s) == 0:
            sd = 0.0  # exact, where std() would leave rounding residue
        else:
            sd = float(s.std(ddof=1))
        half = z * sd / math.sqrt(s.size)
        return cls(mean, half, mean - half, mean + half, int(s.size), sd, excluded, s)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {"mean": self.mean, "half_width": self.half_width, "lower": self.lower,
                "upper": self.upper, "r": self.r, "sd": self.sd, "excluded": self.excluded}


def jittered_demands(problem: ConsensusProblem, jitter: JitterSpec, r: int) -> np.ndarray:
    rng = np.random.default_rng(jitter.seed)
    d = np.asarray(problem.demands)
    lo, hi = problem.sla_range
    return np.clip(d[None, :] + jitter.sample(rng, (r, problem.n)), lo, hi)


def bootstrap_ci(problem: ConsensusProblem, jitter: JitterSpec | None = None, r: int = 100,
                 max_iters: int = 20_000) -> ConfidenceInterval:
    """Consensus over ``r`` restarts with jittered demands, as a 95% interval.

    Every restart starts from its own jittered demands. Restarts that do
    not converge are dropped; more than half dropped is an error.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    jitter = jitter or JitterSpec()
    D = jittered_demands(problem, jitter, r)
    values, _, conv, _ = _gd_batch(problem, D, D.copy(), max_iters)
    excluded = int((~conv).sum())
    if excluded * 2 > r:
        raise ConsensusError(f"{excluded} of {r} restarts did not converge")
    if excluded:
        log.warning("%d of %d restarts did not converge; excluded", excluded, r)
    return ConfidenceInterval.from_samples(values[conv], excluded)


def appendix_a_consensus(intents: Sequence[float], network_target: float) -> int | None:
    """Reference consensus routine with fixed constants.

    Agent weights are 7, the target-alignment weight grows by 0.01 per
    iteration from 0.5, and agreement is checked against the average taken
    before each sweep. Returns the floored average, or None after 1000
    iterations. Kept line-for-line with its pseudocode, including the
    variance it computes and never uses.
    """
    if len(intents) == 0:
        raise ValueError("no intents")
    for v in list(intents) + [network_target]:
        if not 0 <= v <= 100:
            raise ValueError(f"value {v} outside [0, 100]")
    n_agents = len(intents)
    iterations = 1000
    eta = 0.01
    alphas = [7] * n_agents
    gammas = [7] * n_agents
    initial_betas = 0.5
    increase_factor = 0.01
    convergence_threshold = 0.5
    sla = list(intents)
    initial_sla = list(sla)

    for k in range(iterations):
        current_average = sum(sla) / n_agents
        current_variance = sum((s - current_average) ** 2 for s in sla) / n_agents  # noqa: F841
        betas = initial_betas + k * increase_factor
        network_adjustment = betas * (current_average - network_target)
        for i in range(n_agents):
            tenant_gradient = 2 * alphas[i] * (sla[i] - initial_sla[i])
            consensus_gradient = 2 * gammas[i] * (sla[i] - current_average)
            sla[i] = sla[i] - eta * (tenant_gradient + consensus_gradient + network_adjustment)
            sla[i] = min(100, max(0, sla[i]))
        if max(abs(s - current_average) for s in sla) < convergence_threshold:
            return math.floor(current_average)
    return None
