"""Stochastic environment: arm rewards and private agent costs.

The environment owns the ground truth that the principal never sees
directly: per-arm reward distributions (supported on [0, 1]) and per
agent-arm cost distributions (supported on [c_min, 1]).  Each slot it
emits one fresh IID realization from seeded randomness.  Two
environments built with the same seed and driven through the same call
sequence produce bit-identical realizations.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, Sequence, Union

import numpy as np

__all__ = [
    "ArmSpec",
    "TruncatedNormalCost",
    "EdgeComputingCost",
    "CostModel",
    "PriceSeries",
    "PriceSeriesError",
    "EnvRealization",
    "Environment",
    "load_price_series",
    "synthetic_price_series",
]

_MAX_REJECTION_ROUNDS = 1000


@dataclass(frozen=True)
class ArmSpec:
    """One stochastic reward source.

    ``kind`` is either ``"bernoulli"`` (reward in {0, 1} with success
    probability ``mean_reward``) or ``"uniform"`` (reward uniform on
    [lo, hi] with (lo + hi) / 2 == mean_reward).  Both keep rewards in
    [0, 1].
    """

    mean_reward: float
    kind: str = "bernoulli"
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_reward <= 1.0:
            raise ValueError(f"mean_reward must lie in [0, 1], got {self.mean_reward}")
        if self.kind == "bernoulli":
            if self.lo is not None or self.hi is not None:
                raise ValueError("bernoulli arms take no lo/hi bounds")
        elif self.kind == "uniform":
            if self.lo is None or self.hi is None:
                raise ValueError("uniform arms need lo and hi bounds")
            if not 0.0 <= self.lo <= self.hi <= 1.0:
                raise ValueError(f"uniform support [{self.lo}, {self.hi}] must sit inside [0, 1]")
            if abs((self.lo + self.hi) / 2.0 - self.mean_reward) > 1e-12:
                raise ValueError("uniform midpoint must equal mean_reward")
        else:
            raise ValueError(f"unknown arm kind {self.kind!r}")

    @staticmethod
    def bernoulli(mean_reward: float) -> "ArmSpec":
        return ArmSpec(mean_reward=float(mean_reward), kind="bernoulli")

    @staticmethod
    def uniform(lo: float, hi: float) -> "ArmSpec":
        return ArmSpec(mean_reward=(float(lo) + float(hi)) / 2.0, kind="uniform",
                       lo=float(lo), hi=float(hi))

    def sample(self, u: float) -> float:
        """Map one uniform draw u in [0, 1) to a reward."""
        if self.kind == "bernoulli":
            return 1.0 if u < self.mean_reward else 0.0
        return self.lo + u * (self.hi - self.lo)

    def std(self) -> float:
        if self.kind == "bernoulli":
            return math.sqrt(self.mean_reward * (1.0 - self.mean_reward))
        return (self.hi - self.lo) / math.sqrt(12.0)


class PriceSeriesError(ValueError):
    """Raised for malformed price CSV input."""


@dataclass(frozen=True)
class PriceSeries:
    """Ordered (slot_index, price) pairs; lookups wrap cyclically.

    A lookup for slot t returns the ((t - 1) mod len) -th entry's price,
    so horizons longer than the series reuse it periodically.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise PriceSeriesError("price series must contain at least one entry")
        prev = 0
        for slot, price in self.entries:
            if slot <= prev:
                raise PriceSeriesError(f"slot indices must be strictly increasing, got {slot} after {prev}")
            if price < 0.0:
                raise PriceSeriesError(f"negative price {price} at slot {slot}")
            prev = slot

    def __len__(self) -> int:
        return len(self.entries)

    def price_at(self, slot: int) -> float:
        if slot < 1:
            raise ValueError(f"slot must be >= 1, got {slot}")
        return self.entries[(slot - 1) % len(self.entries)][1]

    def prices(self) -> list[float]:
        return [p for _, p in self.entries]


def load_price_series(source: Union[bytes, str, IO[bytes], IO[str]]) -> PriceSeries:
    """Parse a ``slot,price`` CSV into a :class:`PriceSeries`.

    Rejects a missing or wrong header, non-numeric fields (reported with
    their row number), negative prices, and an empty body.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PriceSeriesError("empty price file") from None
    if [h.strip().lower() for h in header] != ["slot", "price"]:
        raise PriceSeriesError(f"expected header 'slot,price', got {','.join(header)!r}")

    entries: list[tuple[int, float]] = []
    for row_number, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise PriceSeriesError(f"row {row_number}: expected 2 fields, got {len(row)}")
        try:
            slot = int(row[0])
            price = float(row[1])
        except ValueError:
            raise PriceSeriesError(f"row {row_number}: could not parse {row!r}") from None
        if price < 0.0:
            raise PriceSeriesError(f"row {row_number}: negative price {price}")
        entries.append((slot, price))
    if not entries:
        raise PriceSeriesError("price file has a header but no rows")
    return PriceSeries(entries=tuple(entries))


def synthetic_price_series(n_hours: int = 168) -> PriceSeries:
    """Deterministic stand-in for a real electricity price trace.

    One week of hourly prices with a daily cycle plus a weekly drift,
    floored well above zero.  Units are arbitrary; combined with energy
    draws on [0, 0.1] the resulting costs stay inside [0, 1].
    """
    entries = []
    for h in range(n_hours):
        hour = h % 24
        daily = 1.1 * math.sin(2.0 * math.pi * (hour - 9) / 24.0)
        intraday = 0.35 * math.sin(4.0 * math.pi * hour / 24.0 + 0.7)
        weekly = 0.25 * math.sin(2.0 * math.pi * h / max(n_hours, 1))
        price = max(0.05, 1.5 + daily + intraday + weekly)
        entries.append((h + 1, price))
    return PriceSeries(entries=tuple(entries))


def _truncated_normal(rng: np.random.Generator, mu: float, sigma: float,
                      lo: float, hi: float, shape: tuple[int, ...]) -> np.ndarray:
    """Rejection-sample a normal truncated to [lo, hi]; exact support."""
    if lo > hi:
        raise ValueError(f"empty support [{lo}, {hi}]")
    if lo == hi:
        return np.full(shape, lo)
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        if not lo <= mu <= hi:
            raise ValueError(f"degenerate mean {mu} outside support [{lo}, {hi}]")
        return np.full(shape, mu)
    out = rng.normal(mu, sigma, size=shape)
    bad = (out < lo) | (out > hi)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_REJECTION_ROUNDS:
            raise RuntimeError("truncated normal rejection did not converge; "
                               "support is too far in the tail")
        n_bad = int(bad.sum())
        out[bad] = rng.normal(mu, sigma, size=n_bad)
        bad = (out < lo) | (out > hi)
    return out


@dataclass(frozen=True)
class TruncatedNormalCost:
    """IID agent-arm costs: a normal truncated to [c_min, 1]."""

    mu: float
    sigma: float
    c_min: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.c_min <= 1.0:
            raise ValueError(f"c_min must lie in [0, 1], got {self.c_min}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.sigma == 0.0 and self.c_min < 1.0 and not self.c_min <= self.mu <= 1.0:
            raise ValueError("degenerate cost mean outside [c_min, 1]")

    def sample(self, rng: np.random.Generator, n_agents: int, n_arms: int,
               slot: int) -> np.ndarray:
        return _truncated_normal(rng, self.mu, self.sigma, self.c_min, 1.0,
                                 (n_agents, n_arms))


@dataclass(frozen=True)
class EdgeComputingCost:
    """Costs driven by electricity prices and per-task energy.

    Each agent-arm pair draws an energy amount from a normal truncated
    to [0, e_max]; the cost is the slot's price times that energy,
    clamped into [c_min, 1].  All agents face the same price series.
    """

    prices: PriceSeries
    energy_mu: float = 0.05
    energy_sigma: float = 0.02
    e_max: float = 0.1
    c_min: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.c_min <= 1.0:
            raise ValueError(f"c_min must lie in [0, 1], got {self.c_min}")
        if self.e_max < 0.0:
            raise ValueError("e_max must be >= 0")
        # Clamping can only bind when raw price * energy can leave [c_min, 1].
        max_cost = max(self.prices.prices()) * self.e_max
        object.__setattr__(self, "_needs_clip", self.c_min > 0.0 or max_cost > 1.0)

    def sample(self, rng: np.random.Generator, n_agents: int, n_arms: int,
               slot: int) -> np.ndarray:
        energy = _truncated_normal(rng, self.energy_mu, self.energy_sigma,
                                   0.0, self.e_max, (n_agents, n_arms))
        costs = self.prices.price_at(slot) * energy
        if self._needs_clip:
            return np.clip(costs, self.c_min, 1.0)
        return costs


CostModel = Union[TruncatedNormalCost, EdgeComputingCost]


@dataclass(frozen=True)
class EnvRealization:
    """One slot's ground truth: rewards r (K,) and costs c (N, K)."""

    rewards: tuple[float, ...]
    costs: np.ndarray
    slot: int


class Environment:
    """Seeded ground-truth process for rewards and costs.

    Draws are consumed in call order from a single generator, so replay
    means rebuilding with the same seed and repeating the same slot
    sequence.  One instance must not be shared across threads;
    independent instances (distinct seeds) are fully parallel-safe.
    """

    def __init__(self, arms: Sequence[ArmSpec], cost_model: CostModel,
                 n_agents: int, seed: int) -> None:
        if not arms:
            raise ValueError("need at least one arm")
        if n_agents < 1:
            raise ValueError("need at least one agent")
        self.arms = tuple(arms)
        self.cost_model = cost_model
        self.n_agents = int(n_agents)
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def c_min(self) -> float:
        return self.cost_model.c_min

    def sample_slot(self, slot: int) -> EnvRealization:
        """Draw one slot's IID rewards and costs."""
        if slot < 1:
            raise ValueError(f"slot must be >= 1, got {slot}")
        u = self._rng.random(len(self.arms)).tolist()
        rewards = tuple(arm.sample(u[k]) for k, arm in enumerate(self.arms))
        costs = self.cost_model.sample(self._rng, self.n_agents, len(self.arms), slot)
        return EnvRealization(rewards=rewards, costs=costs, slot=slot)

    def mean_rewards(self) -> tuple[float, ...]:
        return tuple(arm.mean_reward for arm in self.arms)
