"""Welfare baselines and cumulative metric accounting.

Two benchmarks anchor the mechanism's performance:

* ``s_star`` -- the best expected per-slot welfare achievable by a
  (randomized) assignment policy that knows the mean rewards and sees
  the realized costs, subject to the per-agent expected-utilization
  caps phi.  Exact for finite cost supports (linear program over
  per-realization matching lotteries); estimated by sample-average
  approximation with a dual subgradient method for continuous costs.
* ``s_dagger`` -- the same but with every cost replaced by its floor
  c_min, which collapses to a fractional knapsack over arms and upper
  bounds any achievable social performance.

The ledger accumulates realized reward, cost, welfare, payments and
per-agent utilization over a run; ``finalize_metrics`` turns it into
cumulative regret, fairness violation, profit and degradation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .matching import count_partial_matchings, iter_partial_matchings, max_weight_matching
from .mechanism import SlotRecord

__all__ = [
    "BaselineValues",
    "MetricLedger",
    "Metrics",
    "BoundValues",
    "SaaEstimate",
    "s_dagger",
    "s_star_exact",
    "s_star_dual_saa",
    "record_slot",
    "finalize_metrics",
    "performance_bounds",
]

_MAX_LP_MATCHINGS = 20_000
# Above this many matchings the SAA inner maximization falls back from
# the vectorized enumeration to per-sample matching solves.
_MAX_VECTORIZED_MATCHINGS = 4_000


@dataclass(frozen=True)
class BaselineValues:
    """Baseline welfare values and how s_star was obtained."""

    s_star: float | None
    s_dagger: float
    s_star_method: str


def s_dagger(mean_rewards: Sequence[float], c_min: float,
             phi: Sequence[float]) -> float:
    """Floor-cost welfare bound: fractional knapsack over arms.

    Sort arms by net value (mean reward minus c_min) descending and
    spend the probability budget Phi = sum(phi), at most one unit per
    arm, stopping at non-positive net values.
    """
    budget = float(sum(phi))
    total = 0.0
    for net in sorted((r - c_min for r in mean_rewards), reverse=True):
        if net <= 0.0 or budget <= 0.0:
            break
        p = min(1.0, budget)
        total += net * p
        budget -= p
    return total


def s_star_exact(mean_rewards: Sequence[float],
                 cost_support: Sequence[tuple[Sequence[Sequence[float]], float]],
                 phi: Sequence[float]) -> float:
    """Exact informed baseline for a finite cost support.

    Solves the linear program over randomized per-realization matchings:
    variables z[j, m] give the probability of playing matching m when
    cost realization j is disclosed; expected per-agent utilization is
    capped by phi.  Randomized policies weakly dominate deterministic
    ones under expectation constraints, so this is the value of the
    relaxed (lottery) policy class.
    """
    n_arms = len(mean_rewards)
    if not cost_support:
        raise ValueError("cost support must be non-empty")
    n_agents = len(phi)
    probs = [q for _, q in cost_support]
    if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-9:
        raise ValueError("support probabilities must be nonnegative and sum to 1")

    matchings = list(iter_partial_matchings(n_agents, n_arms))
    n_match = len(matchings)
    n_real = len(cost_support)
    if n_real * n_match > _MAX_LP_MATCHINGS:
        raise ValueError(f"support too large: {n_real} x {n_match} matching lotteries")

    # Objective: maximize sum_j q_j sum_m z[j,m] * welfare(m; c_j).
    welfare = np.zeros((n_real, n_match))
    for j, (costs, _) in enumerate(cost_support):
        for m, edges in enumerate(matchings):
            welfare[j, m] = sum(mean_rewards[k] - costs[n][k] for n, k in edges)
    used = np.zeros((n_match, n_agents))
    for m, edges in enumerate(matchings):
        for n, _ in edges:
            used[m, n] = 1.0

    n_vars = n_real * n_match
    c_vec = -(np.asarray(probs)[:, None] * welfare).reshape(n_vars)

    a_eq = np.zeros((n_real, n_vars))
    for j in range(n_real):
        a_eq[j, j * n_match:(j + 1) * n_match] = 1.0
    b_eq = np.ones(n_real)

    a_ub = np.zeros((n_agents, n_vars))
    for j, q in enumerate(probs):
        a_ub[:, j * n_match:(j + 1) * n_match] = q * used.T
    b_ub = np.asarray(phi, dtype=float)

    res = linprog(c_vec, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"baseline LP failed: {res.message}")
    return float(-res.fun)


@dataclass(frozen=True)
class SaaEstimate:
    """Sample-average estimate of s_star with a dual bound gap report."""

    value: float
    dual_bound: float
    gap: float
    utilization: tuple[float, ...]
    n_samples: int
    n_iterations: int


def s_star_dual_saa(mean_rewards: Sequence[float],
                    cost_sampler: Callable[[np.random.Generator], np.ndarray],
                    phi: Sequence[float], n_samples: int,
                    n_iterations: int = 300, seed: int = 0) -> SaaEstimate:
    """Estimate the informed baseline for continuous cost models.

    Draws ``n_samples`` cost matrices once, then runs a projected dual
    subgradient method on the utilization multipliers; the inner
    maximization is the same matching problem the mechanism solves.
    The reported value averages the per-iterate primal welfare over the
    second half of the iterations; the dual bound is the best Lagrangian
    value seen, and their difference is the optimality gap report.  The
    averaged primal can carry a small residual cap violation, so the
    gap may come out marginally negative.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if n_iterations < 2:
        raise ValueError("need at least two iterations")
    rng = np.random.default_rng(seed)
    rbar = np.asarray(mean_rewards, dtype=float)
    phi_v = np.asarray(phi, dtype=float)
    n_agents = len(phi_v)
    n_arms = len(rbar)
    samples = np.stack([np.asarray(cost_sampler(rng), dtype=float)
                        for _ in range(n_samples)])
    if samples.shape[1:] != (n_agents, n_arms):
        raise ValueError(f"cost sampler returned shape {samples.shape[1:]}, "
                         f"expected {(n_agents, n_arms)}")

    vectorized = count_partial_matchings(n_agents, n_arms) <= _MAX_VECTORIZED_MATCHINGS
    if vectorized:
        matchings = list(iter_partial_matchings(n_agents, n_arms))
        base = np.zeros((n_samples, len(matchings)))
        used = np.zeros((len(matchings), n_agents))
        for m, edges in enumerate(matchings):
            for n, k in edges:
                base[:, m] += rbar[k] - samples[:, n, k]
                used[m, n] = 1.0

    lambdas = np.zeros(n_agents)
    # Multipliers live in [0, 1]^N and subgradients are bounded by
    # sqrt(N), so a unit base step with 1/sqrt(iter) decay is the
    # standard choice.
    step0 = 1.0
    welfare_trace: list[float] = []
    util_trace: list[np.ndarray] = []
    dual_bound = math.inf
    for it in range(n_iterations):
        if vectorized:
            scores = base - used @ lambdas
            best = np.argmax(scores, axis=1)
            inner = float(scores[np.arange(n_samples), best].mean())
            util = used[best].mean(axis=0)
            welfare = float(base[np.arange(n_samples), best].mean())
        else:
            inner_sum = 0.0
            welfare_sum = 0.0
            util = np.zeros(n_agents)
            for j in range(n_samples):
                w = (rbar[None, :] - samples[j] - lambdas[:, None]).tolist()
                assignment, value = max_weight_matching(w)
                inner_sum += value
                for n, k in assignment.edges:
                    welfare_sum += rbar[k] - samples[j, n, k]
                    util[n] += 1.0
            inner = inner_sum / n_samples
            welfare = welfare_sum / n_samples
            util /= n_samples
        dual_bound = min(dual_bound, inner + float(lambdas @ phi_v))
        welfare_trace.append(welfare)
        util_trace.append(util)
        gamma = step0 / math.sqrt(it + 1.0)
        lambdas = np.maximum(0.0, lambdas - gamma * (phi_v - util))

    tail = n_iterations // 2
    value = float(np.mean(welfare_trace[tail:]))
    utilization = tuple(float(x) for x in np.mean(util_trace[tail:], axis=0))
    return SaaEstimate(value=value, dual_bound=dual_bound,
                       gap=dual_bound - value, utilization=utilization,
                       n_samples=n_samples, n_iterations=n_iterations)


@dataclass
class MetricLedger:
    """Running totals for one run."""

    phi: tuple[float, ...]
    slots: int = 0
    cum_reward: float = 0.0
    cum_cost: float = 0.0
    cum_welfare: float = 0.0
    cum_payment: float = 0.0
    per_agent_utilization: list[int] = field(default_factory=list)
    per_agent_payoff: list[float] = field(default_factory=list)
    min_payoff: float = 0.0
    all_participated: bool = True

    def __post_init__(self) -> None:
        if not self.per_agent_utilization:
            self.per_agent_utilization = [0] * len(self.phi)
        if not self.per_agent_payoff:
            self.per_agent_payoff = [0.0] * len(self.phi)


@dataclass(frozen=True)
class Metrics:
    """Cumulative regret, fairness violation, profit and degradation."""

    reg: float | None
    vio: float
    pro: float
    deg: float


def record_slot(ledger: MetricLedger, record: SlotRecord) -> MetricLedger:
    """Fold one settled slot into the ledger (mutates and returns it)."""
    ledger.slots += 1
    ledger.cum_reward += record.reward
    ledger.cum_cost += record.cost
    ledger.cum_welfare += record.welfare
    ledger.cum_payment += record.payment_total
    for n, _ in record.assignment.edges:
        if record.participation[n]:
            ledger.per_agent_utilization[n] += 1
    for n, payoff in enumerate(record.payoffs):
        ledger.per_agent_payoff[n] += payoff
        if record.participation[n] and payoff < ledger.min_payoff:
            ledger.min_payoff = payoff
    if not all(record.participation):
        ledger.all_participated = False
    return ledger


def finalize_metrics(ledger: MetricLedger, baselines: BaselineValues) -> Metrics:
    """Cumulative metrics against the baselines.

    Reg(T) = T * s_star - cumulative welfare (None without an s_star);
    Vio(T) sums, per agent, the positive part of total utilization
    beyond phi_n * T; Pro(T) is reward minus payments; Deg(T) mirrors
    Reg with s_dagger.
    """
    t = ledger.slots
    vio = sum(max(0.0, u - p * t)
              for u, p in zip(ledger.per_agent_utilization, ledger.phi))
    pro = ledger.cum_reward - ledger.cum_payment
    deg = baselines.s_dagger * t - ledger.cum_welfare
    reg = None
    if baselines.s_star is not None:
        reg = baselines.s_star * t - ledger.cum_welfare
    return Metrics(reg=reg, vio=vio, pro=pro, deg=deg)


@dataclass(frozen=True)
class BoundValues:
    """Evaluated performance bounds for one run configuration.

    ``pro_lower`` is the floor on cumulative profit: the guarantee reads
    Pro(T) >= pro_lower.
    """

    reg_bound: float
    vio_bound: float
    pro_lower: float
    delta_star: float


def _xi(delta: float, n_agents: int, theta: float, phi_min: float) -> float:
    gap = phi_min - delta
    root_n = math.sqrt(n_agents)
    return (3.0 * root_n * theta ** 2 / gap) * math.log(2.0 * theta / gap) \
        + 3.0 * root_n * theta / (2.0 * delta)


def performance_bounds(n_arms: int, horizon: int, phi: Sequence[float],
                   vio: float, n_agents: int,
                   n_grid: int = 32) -> BoundValues:
    """Evaluate the guaranteed regret / violation / profit bounds.

    The violation bound is minimized over a log-spaced grid of the free
    parameter delta in (0, phi_min); the regret and profit bounds plug
    in the supplied (realized) violation.
    """
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    k = float(n_arms)
    t = float(horizon)
    big_phi = float(sum(phi))
    phi_min = min(float(p) for p in phi)
    if phi_min <= 0.0:
        raise ValueError("phi_min must be > 0 for the violation bound")
    theta = min(k + big_phi, float(n_agents))

    log_t = math.log(t)
    shared_root = math.sqrt(6.0 * k * t * (big_phi + vio / t) * log_t)
    reg_bound = 6.0 * k + 3.0 * shared_root
    pro_lower = -(2.5 * k + 2.0 * shared_root)

    deltas = np.geomspace(1e-3 * phi_min, 0.999 * phi_min, n_grid)
    if deltas.size == 0:
        raise ValueError("empty delta grid")
    best = math.inf
    best_delta = float(deltas[0])
    tail = (theta ** 2 / 4.0) * math.sqrt(n_agents * t / (k * big_phi))
    for delta in deltas:
        val = _xi(float(delta), n_agents, theta, phi_min) + tail / float(delta)
        if val < best:
            best = val
            best_delta = float(delta)
    return BoundValues(reg_bound=reg_bound, vio_bound=best,
                       pro_lower=pro_lower, delta_star=best_delta)
