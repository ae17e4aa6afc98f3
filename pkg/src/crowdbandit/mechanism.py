"""One-slot auction mechanism: UCB estimates, assignment, payments, duals.

Each slot the principal

1. forms optimistic reward estimates r_hat from past observations,
2. collects cost bids c_hat and solves the penalized welfare problem
       max over feasible x of  sum_{n,k} (r_hat_k - c_hat_{n,k} - lambda_n) x_{n,k},
   where lambda_n >= 0 is the dual price of agent n's long-run
   utilization cap phi_n,
3. pays each assigned agent its estimated contribution minus the loss
   its presence inflicts on the others (a pivot-style payment, which
   makes truthful bidding a dominant strategy per slot),
4. observes rewards only for arms actually played, updates the per-arm
   counters, and takes a projected subgradient step on lambda.

Payments to unassigned agents are exactly zero: with the assignment
optimal for the full problem, an absent row changes nothing, so the
externality bracket vanishes identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .matching import Assignment, _scan_positive, _solve_positive, max_weight_matching

__all__ = [
    "ArmStats",
    "MechanismState",
    "Proposal",
    "SlotRecord",
    "ucb_estimate",
    "assemble_lagrangian_weights",
    "compute_assignment",
    "compute_payments",
    "dual_update",
    "update_arm_stats",
    "tuned_step_size",
    "step",
]


@dataclass(frozen=True)
class ArmStats:
    """Observation counter and empirical mean reward of one arm.

    ``empirical_mean`` is meaningless while ``pulls == 0``; the
    optimistic estimate ignores it in that case.
    """

    pulls: int
    empirical_mean: float = 0.0


@dataclass
class MechanismState:
    """Everything the principal knows between slots."""

    arm_stats: tuple[ArmStats, ...]
    lambdas: tuple[float, ...]
    eta: float
    slot: int
    phi: tuple[float, ...]
    horizon: int

    @staticmethod
    def initial(n_arms: int, phi: Sequence[float], eta: float,
                horizon: int) -> "MechanismState":
        if n_arms < 1:
            raise ValueError("need at least one arm")
        if eta <= 0.0:
            raise ValueError("step-size eta must be > 0")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        phi_t = tuple(float(p) for p in phi)
        if any(not 0.0 <= p <= 1.0 for p in phi_t):
            raise ValueError("utilization caps phi must lie in [0, 1]")
        return MechanismState(
            arm_stats=tuple(ArmStats(pulls=0) for _ in range(n_arms)),
            lambdas=(0.0,) * len(phi_t),
            eta=float(eta),
            slot=1,
            phi=phi_t,
            horizon=int(horizon),
        )

    @property
    def n_arms(self) -> int:
        return len(self.arm_stats)

    @property
    def n_agents(self) -> int:
        return len(self.phi)


@dataclass(frozen=True)
class Proposal:
    """One slot's announced assignment and payment vector."""

    assignment: Assignment
    payments: tuple[float, ...]


@dataclass(frozen=True)
class SlotRecord:
    """Settled outcome of one slot."""

    slot: int
    r_hat: tuple[float, ...]
    bids: Sequence[Sequence[float]]
    assignment: Assignment
    payments: tuple[float, ...]
    participation: tuple[int, ...]
    lambdas: tuple[float, ...]
    reward: float
    cost: float
    welfare: float
    payment_total: float
    profit: float
    payoffs: tuple[float, ...]


def ucb_estimate(stats: ArmStats, slot: int) -> float:
    """Optimistic reward estimate for one arm at the given slot.

    Unobserved arms get the maximal reward 1 so they are never starved;
    otherwise the empirical mean plus an exploration bonus
    sqrt(3 ln(slot) / (2 pulls)), clipped at 1.
    """
    if slot < 1:
        raise ValueError(f"slot must be >= 1, got {slot}")
    if stats.pulls == 0:
        return 1.0
    bonus = math.sqrt(1.5 * math.log(slot) / stats.pulls)
    return min(stats.empirical_mean + bonus, 1.0)


def assemble_lagrangian_weights(r_hat: Sequence[float], bids,
                                lambdas: Sequence[float]) -> list[list[float]]:
    """Per-edge net value: w[n][k] = r_hat[k] - bids[n][k] - lambda[n]."""
    n_agents = len(lambdas)
    if len(bids) != n_agents:
        raise ValueError(f"bids have {len(bids)} rows for {n_agents} agents")
    n_arms = len(r_hat)
    w = []
    for n in range(n_agents):
        row = bids[n]
        if len(row) != n_arms:
            raise ValueError(f"bid row {n} has {len(row)} entries for {n_arms} arms")
        lam = lambdas[n]
        w.append([r_hat[k] - row[k] - lam for k in range(n_arms)])
    return w


def compute_assignment(state: MechanismState, r_hat: Sequence[float],
                       bids) -> Assignment:
    """Welfare-maximizing assignment for the current estimates and bids."""
    w = assemble_lagrangian_weights(r_hat, bids, state.lambdas)
    assignment, _ = max_weight_matching(w)
    return assignment


def _payments_from_weights(w: list[list[float]], x_hat: Assignment,
                           r_hat: Sequence[float],
                           lambdas: Sequence[float]) -> list[float]:
    payments = [0.0] * x_hat.n_agents
    if not x_hat.edges:
        return payments
    rows, per_row = _scan_positive(w, x_hat.n_agents, x_hat.n_arms)
    for n, k in x_hat.edges:
        # Summed directly over the other agents' edges (never derived
        # from the full total) so the result is bitwise independent of
        # agent n's own bid.
        value_of_others = sum(w[i][kk] for i, kk in x_hat.edges if i != n)
        kept = [entries for r, entries in zip(rows, per_row) if r != n]
        if kept:
            _, best_without_n = _solve_positive(kept)
        else:
            best_without_n = 0.0
        externality = best_without_n - value_of_others
        payments[n] = (r_hat[k] - lambdas[n]) - externality
    return payments


def compute_payments(state: MechanismState, r_hat: Sequence[float], bids,
                     x_hat: Assignment) -> list[float]:
    """Pivot payments for the announced assignment.

    For an assigned agent n playing arm k:

        y_n = (r_hat_k - lambda_n) - [ L*_{-n} - L_{-n}(x_hat) ]

    where L_{-n} sums the other agents' net edge values and L*_{-n} is
    its maximum over all feasible assignments (re-solved with agent n's
    row removed).  Unassigned agents receive exactly zero.  The payment
    never depends on agent n's own bid once the assignment is fixed.
    """
    if x_hat.n_agents != state.n_agents or x_hat.n_arms != len(r_hat):
        raise ValueError("assignment dimensions do not match state")
    w = assemble_lagrangian_weights(r_hat, bids, state.lambdas)
    return _payments_from_weights(w, x_hat, r_hat, state.lambdas)


def dual_update(state: MechanismState, x_hat: Assignment,
                participation: Sequence[int]) -> tuple[float, ...]:
    """Projected subgradient step on the utilization duals.

    lambda_n rises by eta * (f_n - phi_n) where f_n in {0, 1} marks
    whether agent n actually played this slot, then projects onto the
    nonnegative orthant.
    """
    f = [0.0] * state.n_agents
    for n, _ in x_hat.edges:
        if participation[n]:
            f[n] = 1.0
    eta = state.eta
    return tuple(max(0.0, lam + eta * (fn - pn))
                 for lam, fn, pn in zip(state.lambdas, f, state.phi))


def update_arm_stats(state: MechanismState, x_hat: Assignment,
                     participation: Sequence[int],
                     realized_rewards: Sequence[float]) -> tuple[ArmStats, ...]:
    """Fold the slot's observations into the per-arm counters.

    Only arms actually played (assigned and accepted) yield an
    observation; all other counters are untouched.
    """
    stats = list(state.arm_stats)
    for n, k in x_hat.edges:
        if participation[n]:
            old = stats[k]
            pulls = old.pulls + 1
            mean = (old.empirical_mean * old.pulls + realized_rewards[k]) / pulls
            stats[k] = ArmStats(pulls=pulls, empirical_mean=mean)
    return tuple(stats)


def tuned_step_size(n_arms: int, horizon: int | float,
                       phi: Sequence[float]) -> float:
    """Horizon-tuned dual step-size.

    eta = (4 K + 2 sqrt(6 K T Phi ln T)) / (T Theta) with Phi the summed
    utilization caps and Theta = min(K + Phi, N).
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    k = int(n_arms)
    t = float(horizon)
    big_phi = float(sum(phi))
    if big_phi <= 0.0:
        raise ValueError("sum of utilization caps must be > 0")
    theta = min(k + big_phi, float(len(phi)))
    if theta <= 0.0:
        raise ValueError("Theta must be > 0")
    return (4.0 * k + 2.0 * math.sqrt(6.0 * k * t * big_phi * math.log(t))) / (t * theta)


DecideFn = Callable[[Proposal], Sequence[int]]


def step(state: MechanismState, bids, realization,
         decide_fn: DecideFn) -> tuple[Proposal, SlotRecord, MechanismState]:
    """Run one full slot and return the settled outcome plus new state.

    ``realization`` carries the slot's true rewards and costs; only the
    rewards of arms actually played feed back into the estimates.
    ``decide_fn`` maps the announced proposal to the agents' accept
    flags.
    """
    if state.slot > state.horizon:
        raise ValueError(f"slot {state.slot} is past the horizon {state.horizon}")
    t = state.slot
    r_hat = [ucb_estimate(s, t) for s in state.arm_stats]
    w = assemble_lagrangian_weights(r_hat, bids, state.lambdas)
    x_hat, _ = max_weight_matching(w)
    payments = _payments_from_weights(w, x_hat, r_hat, state.lambdas)
    proposal = Proposal(assignment=x_hat, payments=tuple(payments))

    participation = tuple(int(a) for a in decide_fn(proposal))
    if len(participation) != state.n_agents:
        raise ValueError("participation vector has wrong length")

    rewards = realization.rewards
    costs = realization.costs
    reward_total = 0.0
    cost_total = 0.0
    payment_total = 0.0
    payoffs = [0.0] * state.n_agents
    for n, k in x_hat.edges:
        if participation[n]:
            c_nk = float(costs[n][k])
            reward_total += rewards[k]
            cost_total += c_nk
            payment_total += payments[n]
            payoffs[n] = payments[n] - c_nk
    # Unassigned participants earn their (zero) payment.
    welfare = reward_total - cost_total

    new_stats = update_arm_stats(state, x_hat, participation, rewards)
    new_lambdas = dual_update(state, x_hat, participation)

    record = SlotRecord(
        slot=t,
        r_hat=tuple(r_hat),
        bids=bids,
        assignment=x_hat,
        payments=proposal.payments,
        participation=participation,
        lambdas=state.lambdas,
        reward=reward_total,
        cost=cost_total,
        welfare=welfare,
        payment_total=payment_total,
        profit=reward_total - payment_total,
        payoffs=tuple(payoffs),
    )
    new_state = MechanismState(
        arm_stats=new_stats,
        lambdas=new_lambdas,
        eta=state.eta,
        slot=t + 1,
        phi=state.phi,
        horizon=state.horizon,
    )
    return proposal, record, new_state
