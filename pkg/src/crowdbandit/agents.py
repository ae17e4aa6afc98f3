"""Agent behavior: bid formation and the per-slot participation choice.

Agents are selfish.  They submit cost bids into the auction (truthfully
by default; deviating policies exist purely to probe the incentive
properties) and then accept or decline the announced proposal based on
whether the payment covers their true cost.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mechanism import Proposal

__all__ = [
    "AgentPolicy",
    "ParticipationDecision",
    "form_bids",
    "decide_participation",
    "slot_payoffs",
]

_POLICY_KINDS = ("truthful", "overbid", "underbid", "random")

# Indifference at exactly zero payoff resolves to participation; the
# tolerance absorbs last-ulp arithmetic noise in mathematically zero
# payoffs.
_PARTICIPATION_TOL = 1e-12


@dataclass(frozen=True)
class AgentPolicy:
    """Bid policy: truthful, fixed over/underbid by delta, or random."""

    kind: str = "truthful"
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.delta < 0.0:
            raise ValueError("delta must be >= 0; the kind encodes the sign")

    @staticmethod
    def truthful() -> "AgentPolicy":
        return AgentPolicy(kind="truthful")

    @staticmethod
    def overbid(delta: float) -> "AgentPolicy":
        return AgentPolicy(kind="overbid", delta=float(delta))

    @staticmethod
    def underbid(delta: float) -> "AgentPolicy":
        return AgentPolicy(kind="underbid", delta=float(delta))

    @staticmethod
    def random_misreport(seed: int) -> "AgentPolicy":
        return AgentPolicy(kind="random", seed=int(seed))


@dataclass(frozen=True)
class ParticipationDecision:
    """Per-agent accept (1) / decline (0) flags for one proposal."""

    a: tuple[int, ...]


def _misreport_rng(seed: int, costs: np.ndarray) -> np.random.Generator:
    # Deterministic function of (seed, true costs): reproducible without
    # carrying stream state between slots.
    digest = hashlib.blake2b(costs.tobytes(),
                             digest_size=8,
                             key=int(seed).to_bytes(8, "little", signed=False)).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def form_bids(policy: AgentPolicy, true_costs, c_min: float = 0.0) -> np.ndarray:
    """Turn true costs into bids; results are clamped into [c_min, 1].

    ``true_costs`` may be a cost vector for one agent or a full N x K
    matrix; the policy applies elementwise.  Truthful bidding returns
    the costs unchanged.
    """
    costs = np.asarray(true_costs, dtype=float)
    if policy.kind == "truthful":
        return costs
    if policy.kind == "overbid":
        return np.clip(costs + policy.delta, c_min, 1.0)
    if policy.kind == "underbid":
        return np.clip(costs - policy.delta, c_min, 1.0)
    rng = _misreport_rng(policy.seed, costs)
    return c_min + rng.random(costs.shape) * (1.0 - c_min)


def form_bid_matrix(policies: Sequence[AgentPolicy], true_costs,
                    c_min: float = 0.0) -> np.ndarray:
    """Apply one policy per agent (row) to the full cost matrix."""
    costs = np.asarray(true_costs, dtype=float)
    if len(policies) != costs.shape[0]:
        raise ValueError(f"{len(policies)} policies for {costs.shape[0]} agents")
    if all(p.kind == "truthful" for p in policies):
        return costs
    rows = [form_bids(p, costs[n], c_min) for n, p in enumerate(policies)]
    return np.stack(rows, axis=0)


def decide_participation(proposal: Proposal, true_costs) -> ParticipationDecision:
    """Accept iff the payment covers the true cost of the assigned arm.

    The payoff of agent n under acceptance is y_n minus the true cost of
    the arm it was assigned (zero if unassigned); the weak inequality
    means indifferent agents participate.
    """
    assignment = proposal.assignment
    a = [1] * assignment.n_agents
    for n, k in assignment.edges:
        if proposal.payments[n] - true_costs[n][k] < -_PARTICIPATION_TOL:
            a[n] = 0
    return ParticipationDecision(a=tuple(a))


def slot_payoffs(proposal: Proposal, true_costs,
                 participation: Sequence[int]) -> list[float]:
    """Realized per-agent payoff: (y_n - cost_n) for participants, else 0."""
    assignment = proposal.assignment
    payoffs = [0.0] * assignment.n_agents
    for n in range(assignment.n_agents):
        if participation[n]:
            k = assignment.arm_of(n)
            cost = true_costs[n][k] if k is not None else 0.0
            payoffs[n] = proposal.payments[n] - cost
    return payoffs
