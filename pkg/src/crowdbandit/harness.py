"""Run orchestration: configs, seeded batches, CSV output, replay.

A run configuration describes one experiment: the environment (arms and
cost model), the mechanism parameters (utilization caps, dual step
size), agent bid policies, horizon T and the number R of independent
seeded repetitions.  ``run`` executes all repetitions, streams per-slot
rows to CSV, and writes a summary with metrics, baseline values and
evaluated performance bounds.  ``replay`` rebuilds a stored run from
its seed and asserts the recomputed rows match the stored ones.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import AgentPolicy, decide_participation, form_bid_matrix
from .env import (
    ArmSpec,
    CostModel,
    EdgeComputingCost,
    Environment,
    PriceSeries,
    TruncatedNormalCost,
    load_price_series,
    synthetic_price_series,
)
from .mechanism import MechanismState, SlotRecord, step, tuned_step_size
from .oracle import (
    BaselineValues,
    BoundValues,
    MetricLedger,
    Metrics,
    SaaEstimate,
    finalize_metrics,
    record_slot,
    s_dagger,
    s_star_dual_saa,
    performance_bounds,
)

__all__ = [
    "RunConfig",
    "RunOutput",
    "ConfigError",
    "ReplayMismatchError",
    "parse_config",
    "serialize_config",
    "load_config",
    "simulate_run",
    "run",
    "preset_small_scale",
    "preset_large_scale",
    "replay",
    "replay_all",
]

SLOTS_FILE = "slots.csv"
SUMMARY_FILE = "summary.csv"
AGGREGATE_FILE = "aggregate.csv"
METADATA_FILE = "metadata.json"

_ORACLE_SEED_OFFSET = 1_000_003


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent run configurations."""


class ReplayMismatchError(RuntimeError):
    """A recomputed slot row differs from the stored one."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: environment, mechanism, policies, horizons."""

    K: int
    N: int
    T: int
    R: int
    arms: tuple[ArmSpec, ...]
    cost_model: str = "edge-computing"
    c_min: float = 0.0
    price_series: str = "synthetic"
    energy_mu: float = 0.05
    energy_sigma: float = 0.02
    energy_max: float = 0.1
    cost_mu: float = 0.3
    cost_sigma: float = 0.1
    phi: tuple[float, ...] | None = None
    alpha: float | None = None
    eta: float | None = None
    policies: tuple[AgentPolicy, ...] = ()
    seed: int = 1
    output_dir: str = "runs/out"
    slot_rows: bool = True
    saa_samples: int = 4000
    saa_iterations: int = 400

    def __post_init__(self) -> None:
        for name in ("K", "N", "T", "R"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if len(self.arms) != self.K:
            raise ConfigError(f"{len(self.arms)} arm specs for K={self.K}")
        if self.cost_model not in ("edge-computing", "truncated-normal"):
            raise ConfigError(f"unknown cost model {self.cost_model!r}")
        if (self.phi is None) == (self.alpha is None):
            raise ConfigError("exactly one of phi / alpha (homogeneous) must be set")
        if self.phi is not None:
            if len(self.phi) != self.N:
                raise ConfigError(f"{len(self.phi)} phi entries for N={self.N}")
            if any(not 0.0 <= p <= 1.0 for p in self.phi):
                raise ConfigError("phi entries must lie in [0, 1]")
        if self.alpha is not None and self.alpha <= 0.0:
            raise ConfigError("alpha must be > 0")
        if self.eta is not None and self.eta <= 0.0:
            raise ConfigError("explicit eta must be > 0")
        if self.policies and len(self.policies) not in (1, self.N):
            raise ConfigError("policies must list one entry or one per agent")
        # Normalize to one policy per agent so configs compare field-wise.
        if len(self.policies) != self.N:
            base = self.policies[0] if self.policies else AgentPolicy.truthful()
            object.__setattr__(self, "policies", (base,) * self.N)

    def phi_vector(self) -> tuple[float, ...]:
        if self.phi is not None:
            return self.phi
        return (min(1.0, self.alpha / self.N),) * self.N

    def eta_value(self) -> float:
        if self.eta is not None:
            return self.eta
        return tuned_step_size(self.K, self.T, self.phi_vector())

    def policy_vector(self) -> tuple[AgentPolicy, ...]:
        return self.policies

    def build_price_series(self) -> PriceSeries:
        if self.price_series == "synthetic":
            return synthetic_price_series()
        with open(self.price_series, "rb") as fh:
            return load_price_series(fh)

    def build_cost_model(self) -> CostModel:
        if self.cost_model == "edge-computing":
            return EdgeComputingCost(prices=self.build_price_series(),
                                     energy_mu=self.energy_mu,
                                     energy_sigma=self.energy_sigma,
                                     e_max=self.energy_max,
                                     c_min=self.c_min)
        return TruncatedNormalCost(mu=self.cost_mu, sigma=self.cost_sigma,
                                   c_min=self.c_min)

    def build_environment(self, seed: int) -> Environment:
        return Environment(self.arms, self.build_cost_model(), self.N, seed)

    def mean_rewards(self) -> tuple[float, ...]:
        return tuple(a.mean_reward for a in self.arms)


# -- config text format -------------------------------------------------

def _arm_token(arm: ArmSpec) -> str:
    if arm.kind == "bernoulli":
        return f"bernoulli:{arm.mean_reward!r}"
    return f"uniform:{arm.lo!r}:{arm.hi!r}"


def _parse_arm(token: str) -> ArmSpec:
    parts = token.split(":")
    try:
        if parts[0] == "bernoulli" and len(parts) == 2:
            return ArmSpec.bernoulli(float(parts[1]))
        if parts[0] == "uniform" and len(parts) == 3:
            return ArmSpec.uniform(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad arm token {token!r}: {exc}") from None
    raise ConfigError(f"bad arm token {token!r}")


def _policy_token(policy: AgentPolicy) -> str:
    if policy.kind == "truthful":
        return "truthful"
    if policy.kind == "random":
        return f"random:{policy.seed}"
    return f"{policy.kind}:{policy.delta!r}"


def _parse_policy(token: str) -> AgentPolicy:
    parts = token.split(":")
    try:
        if parts[0] == "truthful" and len(parts) == 1:
            return AgentPolicy.truthful()
        if parts[0] == "overbid" and len(parts) == 2:
            return AgentPolicy.overbid(float(parts[1]))
        if parts[0] == "underbid" and len(parts) == 2:
            return AgentPolicy.underbid(float(parts[1]))
        if parts[0] == "random" and len(parts) == 2:
            return AgentPolicy.random_misreport(int(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"bad policy token {token!r}: {exc}") from None
    raise ConfigError(f"bad policy token {token!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = [
        f"K = {cfg.K}",
        f"N = {cfg.N}",
        f"T = {cfg.T}",
        f"R = {cfg.R}",
        "arms = " + " ".join(_arm_token(a) for a in cfg.arms),
        f"cost_model = {cfg.cost_model}",
        f"c_min = {cfg.c_min!r}",
    ]
    if cfg.cost_model == "edge-computing":
        lines += [
            f"price_series = {cfg.price_series}",
            f"energy_mu = {cfg.energy_mu!r}",
            f"energy_sigma = {cfg.energy_sigma!r}",
            f"energy_max = {cfg.energy_max!r}",
        ]
    else:
        lines += [
            f"cost_mu = {cfg.cost_mu!r}",
            f"cost_sigma = {cfg.cost_sigma!r}",
        ]
    if cfg.alpha is not None:
        lines.append(f"phi = homogeneous:{cfg.alpha!r}")
    else:
        lines.append("phi = " + " ".join(repr(p) for p in cfg.phi))
    lines.append(f"eta = {'tuned' if cfg.eta is None else repr(cfg.eta)}")
    lines.append("policies = " + " ".join(_policy_token(p) for p in cfg.policy_vector()))
    lines += [
        f"seed = {cfg.seed}",
        f"output_dir = {cfg.output_dir}",
        f"slot_rows = {'on' if cfg.slot_rows else 'off'}",
        f"saa_samples = {cfg.saa_samples}",
        f"saa_iterations = {cfg.saa_iterations}",
    ]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value

    def take(key: str, default: str | None = None) -> str:
        if key in fields:
            return fields.pop(key)
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default

    try:
        k = int(take("K"))
        n = int(take("N"))
        t = int(take("T"))
        r = int(take("R"))
    except ValueError as exc:
        raise ConfigError(f"bad integer field: {exc}") from None
    arms = tuple(_parse_arm(tok) for tok in take("arms").split())
    cost_model = take("cost_model", "edge-computing")

    phi_raw = take("phi")
    phi: tuple[float, ...] | None = None
    alpha: float | None = None
    if phi_raw.startswith("homogeneous:"):
        alpha = float(phi_raw.split(":", 1)[1])
    else:
        phi = tuple(float(tok) for tok in phi_raw.split())

    eta_raw = take("eta", "tuned")
    eta = None if eta_raw == "tuned" else float(eta_raw)
    policies = tuple(_parse_policy(tok) for tok in take("policies", "truthful").split())
    slot_rows_raw = take("slot_rows", "on")
    if slot_rows_raw not in ("on", "off"):
        raise ConfigError(f"slot_rows must be 'on' or 'off', got {slot_rows_raw!r}")

    cfg = RunConfig(
        K=k, N=n, T=t, R=r, arms=arms,
        cost_model=cost_model,
        c_min=float(take("c_min", "0.0")),
        price_series=take("price_series", "synthetic"),
        energy_mu=float(take("energy_mu", "0.05")),
        energy_sigma=float(take("energy_sigma", "0.02")),
        energy_max=float(take("energy_max", "0.1")),
        cost_mu=float(take("cost_mu", "0.3")),
        cost_sigma=float(take("cost_sigma", "0.1")),
        phi=phi, alpha=alpha, eta=eta, policies=policies,
        seed=int(take("seed", "1")),
        output_dir=take("output_dir", "runs/out"),
        slot_rows=slot_rows_raw == "on",
        saa_samples=int(take("saa_samples", "4000")),
        saa_iterations=int(take("saa_iterations", "400")),
    )
    if fields:
        raise ConfigError(f"unknown keys: {sorted(fields)}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- presets -------------------------------------------------------------

_SMALL_SCALE_MEANS = (0.1, 0.3, 0.5, 0.7, 0.9)


def preset_small_scale(T: int = 20_000, R: int = 20, seed: int = 2024,
                       output_dir: str = "runs/small-scale") -> RunConfig:
    """Two heterogeneous agents (caps 0.7 / 0.3) serving five arms.

    Bernoulli demand with mean vector (0.1, 0.3, 0.5, 0.7, 0.9), costs
    from electricity price times task energy (energy normal on [0, 0.1]
    with mu 0.05 and sigma 0.02), dual step size tuned to the horizon.
    The horizon default is a desk-scale choice, adjustable per run.
    """
    return RunConfig(
        K=5, N=2, T=T, R=R,
        arms=tuple(ArmSpec.bernoulli(m) for m in _SMALL_SCALE_MEANS),
        cost_model="edge-computing",
        phi=(0.7, 0.3),
        seed=seed,
        output_dir=output_dir,
    )


def preset_large_scale(alpha: float = 1.0, beta: float = 0.2, T: int = 100_000,
                       R: int = 20, seed: int = 2024,
                       output_dir: str = "runs/large-scale",
                       ns: Sequence[int] | None = None) -> list[RunConfig]:
    """Homogeneous crowd sweep: N agents each capped at alpha / N.

    The crowd is swept up to floor(alpha^(1/3) * T^beta) agents, the
    regime in which the welfare gap to the floor-cost bound closes as
    the crowd grows.  A point at N = 1 clamps its cap to 1.
    """
    if not 0.0 < beta < 1.0 / 3.0:
        raise ConfigError(f"beta must lie in (0, 1/3), got {beta}")
    if alpha <= 0.0:
        raise ConfigError("alpha must be > 0")
    n_max = math.floor(alpha ** (1.0 / 3.0) * float(T) ** beta)
    if n_max < 1:
        raise ConfigError(f"crowd limit floor(alpha^(1/3) T^beta) = {n_max} < 1")
    if ns is None:
        ns = list(range(2, n_max + 1, 2))
        if not ns:
            ns = [n_max]
        elif ns[-1] != n_max:
            ns.append(n_max)
    configs = []
    for n in ns:
        if n < 1 or n > n_max:
            raise ConfigError(f"sweep point N={n} outside [1, {n_max}]")
        configs.append(RunConfig(
            K=5, N=n, T=T, R=R,
            arms=tuple(ArmSpec.bernoulli(m) for m in _SMALL_SCALE_MEANS),
            cost_model="edge-computing",
            alpha=alpha,
            seed=seed,
            output_dir=f"{output_dir}/N{n}",
            slot_rows=False,
            saa_samples=512,
            saa_iterations=120,
        ))
    return configs


# -- simulation ----------------------------------------------------------

RowSink = Callable[[int, SlotRecord], None]


def simulate_run(cfg: RunConfig, run_index: int,
                 row_sink: RowSink | None = None) -> MetricLedger:
    """Run one seeded repetition of the mechanism over T slots."""
    seed = cfg.seed + run_index
    env = cfg.build_environment(seed)
    phi = cfg.phi_vector()
    state = MechanismState.initial(cfg.K, phi, cfg.eta_value(), cfg.T)
    policies = cfg.policy_vector()
    truthful = all(p.kind == "truthful" for p in policies)
    c_min = cfg.c_min
    ledger = MetricLedger(phi=phi)
    for t in range(1, cfg.T + 1):
        realization = env.sample_slot(t)
        costs = realization.costs.tolist()
        if truthful:
            bids = costs
        else:
            bids = form_bid_matrix(policies, realization.costs, c_min).tolist()

        def decide(proposal, _costs=costs):
            return decide_participation(proposal, _costs).a

        _, record, state = step(state, bids, realization, decide)
        record_slot(ledger, record)
        if row_sink is not None:
            row_sink(run_index, record)
    return ledger


def _fmt(x: float) -> str:
    return repr(float(x))


def _slot_header(k: int, n: int) -> list[str]:
    return (["run", "slot"]
            + [f"rhat_{i + 1}" for i in range(k)]
            + ["assignments"]
            + [f"pay_{i + 1}" for i in range(n)]
            + [f"lambda_{i + 1}" for i in range(n)]
            + ["reward", "cost", "welfare", "profit"])


def format_slot_row(run_index: int, record: SlotRecord) -> list[str]:
    edges = ";".join(f"{n + 1}:{k + 1}" for n, k in record.assignment.edges)
    return ([str(run_index + 1), str(record.slot)]
            + [_fmt(v) for v in record.r_hat]
            + [edges]
            + [_fmt(v) for v in record.payments]
            + [_fmt(v) for v in record.lambdas]
            + [_fmt(record.reward), _fmt(record.cost),
               _fmt(record.welfare), _fmt(record.profit)])


@dataclass(frozen=True)
class RunOutput:
    """Everything a finished batch reports."""

    config: RunConfig
    output_dir: Path | None
    ledgers: tuple[MetricLedger, ...]
    metrics: tuple[Metrics, ...]
    baselines: BaselineValues
    bounds: BoundValues | None
    saa_report: SaaEstimate | None
    wall_time_s: float

    def metric_mean_std(self, name: str) -> tuple[float, float]:
        values = [getattr(m, name) for m in self.metrics]
        if any(v is None for v in values):
            return math.nan, math.nan
        arr = np.asarray(values, dtype=float)
        return float(arr.mean()), float(arr.std())


def compute_baselines(cfg: RunConfig) -> tuple[BaselineValues, SaaEstimate | None]:
    """Floor-cost bound exactly; informed baseline via SAA.

    Both cost models here are continuous, so s_star is estimated by
    sample-average approximation.  For the price-driven model the
    sampler first draws a uniformly random position in the price cycle,
    treating the cost process as the stationary mixture over the cycle.
    """
    phi = cfg.phi_vector()
    dag = s_dagger(cfg.mean_rewards(), cfg.c_min, phi)
    model = cfg.build_cost_model()
    if isinstance(model, EdgeComputingCost):
        n_prices = len(model.prices)

        def sampler(rng: np.random.Generator) -> np.ndarray:
            slot = int(rng.integers(1, n_prices + 1))
            return model.sample(rng, cfg.N, cfg.K, slot)
    else:
        def sampler(rng: np.random.Generator) -> np.ndarray:
            return model.sample(rng, cfg.N, cfg.K, 1)

    saa = s_star_dual_saa(cfg.mean_rewards(), sampler, phi,
                          n_samples=cfg.saa_samples,
                          n_iterations=cfg.saa_iterations,
                          seed=cfg.seed + _ORACLE_SEED_OFFSET)
    baselines = BaselineValues(s_star=saa.value, s_dagger=dag,
                               s_star_method=f"dual-saa(M={cfg.saa_samples})")
    return baselines, saa


def run(cfg: RunConfig, output_dir: str | Path | None = None) -> RunOutput:
    """Execute R seeded repetitions and write CSV artifacts.

    Writes ``slots.csv`` (one row per slot per run, fixed column order),
    ``summary.csv`` (one row per run), ``aggregate.csv`` (per-slot
    running averages across runs with a three-sigma band) and
    ``metadata.json``.  With ``slot_rows`` off only the summary and
    metadata are produced.
    """
    t_start = time.perf_counter()
    out_dir: Path | None
    if output_dir is not None:
        out_dir = Path(output_dir)
    else:
        out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    baselines, saa = compute_baselines(cfg)

    ledgers: list[MetricLedger] = []
    series: list[dict[str, np.ndarray]] | None = [] if cfg.slot_rows else None

    slots_path = out_dir / SLOTS_FILE
    slots_fh = None
    try:
        if cfg.slot_rows:
            slots_fh = open(slots_path, "w", newline="", encoding="utf-8")
            slots_fh.write(",".join(_slot_header(cfg.K, cfg.N)) + "\n")
        for r in range(cfg.R):
            if cfg.slot_rows:
                per_slot = {name: np.zeros(cfg.T) for name in
                            ("reward", "cost", "welfare", "profit")}

                def sink(run_index: int, record: SlotRecord,
                         _fh=slots_fh, _vals=per_slot) -> None:
                    _fh.write(",".join(format_slot_row(run_index, record)) + "\n")
                    i = record.slot - 1
                    _vals["reward"][i] = record.reward
                    _vals["cost"][i] = record.cost
                    _vals["welfare"][i] = record.welfare
                    _vals["profit"][i] = record.profit

                ledger = simulate_run(cfg, r, row_sink=sink)
                series.append(per_slot)
            else:
                ledger = simulate_run(cfg, r)
            ledgers.append(ledger)
    finally:
        if slots_fh is not None:
            slots_fh.close()

    metrics = [finalize_metrics(ledger, baselines) for ledger in ledgers]
    vio_mean = float(np.mean([m.vio for m in metrics]))
    # The horizon bounds need ln T > 0.
    bounds = None
    if cfg.T >= 2:
        bounds = performance_bounds(cfg.K, cfg.T, cfg.phi_vector(), vio_mean, cfg.N)

    _write_summary(out_dir, cfg, ledgers, metrics)
    if cfg.slot_rows and series:
        _write_aggregate(out_dir, cfg, series)
    wall = time.perf_counter() - t_start
    _write_metadata(out_dir, cfg, ledgers, metrics, baselines, bounds, saa, wall)

    return RunOutput(config=cfg, output_dir=out_dir, ledgers=tuple(ledgers),
                     metrics=tuple(metrics), baselines=baselines, bounds=bounds,
                     saa_report=saa, wall_time_s=wall)


def _summary_header(n: int) -> list[str]:
    return (["run", "seed", "slots", "reward", "cost", "welfare", "payment",
             "reg", "vio", "pro", "deg", "min_payoff", "all_participated"]
            + [f"util_{i + 1}" for i in range(n)]
            + [f"payoff_{i + 1}" for i in range(n)])


def _summary_row(cfg: RunConfig, run_index: int, ledger: MetricLedger,
                 metrics: Metrics) -> list[str]:
    return ([str(run_index + 1), str(cfg.seed + run_index), str(ledger.slots),
             _fmt(ledger.cum_reward), _fmt(ledger.cum_cost),
             _fmt(ledger.cum_welfare), _fmt(ledger.cum_payment),
             "" if metrics.reg is None else _fmt(metrics.reg),
             _fmt(metrics.vio), _fmt(metrics.pro), _fmt(metrics.deg),
             _fmt(ledger.min_payoff), str(int(ledger.all_participated))]
            + [str(u) for u in ledger.per_agent_utilization]
            + [_fmt(p) for p in ledger.per_agent_payoff])


def _write_summary(out_dir: Path, cfg: RunConfig, ledgers: Sequence[MetricLedger],
                   metrics: Sequence[Metrics]) -> None:
    with open(out_dir / SUMMARY_FILE, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(_summary_header(cfg.N)) + "\n")
        for r, (ledger, m) in enumerate(zip(ledgers, metrics)):
            fh.write(",".join(_summary_row(cfg, r, ledger, m)) + "\n")


def _write_aggregate(out_dir: Path, cfg: RunConfig,
                     series: Sequence[dict[str, np.ndarray]]) -> None:
    # Running per-slot averages across runs, with a three-sigma band and
    # the best mean reward as a reference line.
    names = ("reward", "cost", "welfare", "profit")
    slots = np.arange(1, cfg.T + 1, dtype=float)
    stacked = {name: np.stack([np.cumsum(s[name]) / slots for s in series])
               for name in names}
    r_max = max(cfg.mean_rewards())
    header = ["slot"]
    for name in names:
        header += [f"{name}_mean", f"{name}_lo3", f"{name}_hi3"]
    header.append("r_max")
    with open(out_dir / AGGREGATE_FILE, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        means = {name: stacked[name].mean(axis=0) for name in names}
        stds = {name: stacked[name].std(axis=0) for name in names}
        for i in range(cfg.T):
            row = [str(i + 1)]
            for name in names:
                m = means[name][i]
                s = stds[name][i]
                row += [_fmt(m), _fmt(m - 3.0 * s), _fmt(m + 3.0 * s)]
            row.append(_fmt(r_max))
            fh.write(",".join(row) + "\n")


def _write_metadata(out_dir: Path, cfg: RunConfig, ledgers: Sequence[MetricLedger],
                    metrics: Sequence[Metrics], baselines: BaselineValues,
                    bounds: BoundValues | None, saa: SaaEstimate | None,
                    wall: float) -> None:
    config_text = serialize_config(cfg)
    regs = [m.reg for m in metrics]
    summary = {
        "reg_mean": None if any(v is None for v in regs) else float(np.mean(regs)),
        "reg_std": None if any(v is None for v in regs) else float(np.std(regs)),
        "vio_mean": float(np.mean([m.vio for m in metrics])),
        "vio_std": float(np.std([m.vio for m in metrics])),
        "pro_mean": float(np.mean([m.pro for m in metrics])),
        "pro_std": float(np.std([m.pro for m in metrics])),
        "deg_mean": float(np.mean([m.deg for m in metrics])),
        "deg_std": float(np.std([m.deg for m in metrics])),
        "welfare_mean": float(np.mean([l.cum_welfare for l in ledgers])),
        "reward_mean": float(np.mean([l.cum_reward for l in ledgers])),
        "cost_mean": float(np.mean([l.cum_cost for l in ledgers])),
        "payment_mean": float(np.mean([l.cum_payment for l in ledgers])),
    }
    payload = {
        "config": config_text,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "baselines": {
            "s_star": baselines.s_star,
            "s_dagger": baselines.s_dagger,
            "method": baselines.s_star_method,
            "saa_gap": None if saa is None else saa.gap,
            "saa_dual_bound": None if saa is None else saa.dual_bound,
        },
        "bounds": None if bounds is None else {
            "reg_bound": bounds.reg_bound,
            "vio_bound": bounds.vio_bound,
            "pro_lower": bounds.pro_lower,
            "delta_star": bounds.delta_star,
        },
        "summary": summary,
        "wall_time_s": wall,
        "n_runs": cfg.R,
    }
    with open(out_dir / METADATA_FILE, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- replay --------------------------------------------------------------

def _load_stored(output_dir: Path) -> tuple[RunConfig, Path]:
    meta_path = output_dir / METADATA_FILE
    if not meta_path.exists():
        raise FileNotFoundError(f"no metadata at {meta_path}")
    payload = json.loads(meta_path.read_text(encoding="utf-8"))
    cfg = parse_config(payload["config"])
    slots_path = output_dir / SLOTS_FILE
    if not slots_path.exists():
        raise FileNotFoundError(f"no per-slot rows at {slots_path}")
    return cfg, slots_path


def _iter_stored_rows(slots_path: Path, run_index: int):
    run_tag = str(run_index + 1)
    with open(slots_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ReplayMismatchError("slots file is empty")
        for line in fh:
            fields = line.rstrip("\n").split(",")
            if fields and fields[0] == run_tag:
                yield fields


def _replay_scan(output_dir: str | Path, last_slot: int | None,
                 run_index: int) -> tuple[SlotRecord, MetricLedger, RunConfig]:
    """Re-derive rows from the seed and compare against stored ones."""
    out_dir = Path(output_dir)
    cfg, slots_path = _load_stored(out_dir)
    if last_slot is None:
        last_slot = cfg.T
    if not 1 <= last_slot <= cfg.T:
        raise ValueError(f"slot must lie in [1, {cfg.T}]")
    if not 0 <= run_index < cfg.R:
        raise ValueError(f"run index must lie in [0, {cfg.R - 1}]")

    stored = _iter_stored_rows(slots_path, run_index)
    target: SlotRecord | None = None
    ledger = MetricLedger(phi=cfg.phi_vector())

    env = cfg.build_environment(cfg.seed + run_index)
    state = MechanismState.initial(cfg.K, cfg.phi_vector(), cfg.eta_value(), cfg.T)
    policies = cfg.policy_vector()
    truthful = all(p.kind == "truthful" for p in policies)
    for t in range(1, last_slot + 1):
        realization = env.sample_slot(t)
        costs = realization.costs.tolist()
        bids = costs if truthful else form_bid_matrix(policies, realization.costs,
                                                      cfg.c_min).tolist()

        def decide(proposal, _costs=costs):
            return decide_participation(proposal, _costs).a

        _, record, state = step(state, bids, realization, decide)
        record_slot(ledger, record)
        try:
            stored_fields = next(stored)
        except StopIteration:
            raise ReplayMismatchError(
                f"run {run_index + 1}: stored rows end before slot {t}") from None
        recomputed = format_slot_row(run_index, record)
        if stored_fields != recomputed:
            raise ReplayMismatchError(
                f"run {run_index + 1} slot {t}: stored row differs from replay\n"
                f"  stored:     {stored_fields}\n"
                f"  recomputed: {recomputed}")
        if t == last_slot:
            target = record
    assert target is not None
    return target, ledger, cfg


def replay(output_dir: str | Path, slot: int, run_index: int = 0) -> SlotRecord:
    """Recompute one run up to ``slot`` and assert rows match storage."""
    record, _, _ = _replay_scan(output_dir, slot, run_index)
    return record


def replay_all(output_dir: str | Path, run_index: int = 0) -> MetricLedger:
    """Replay a full run, checking every stored row and the summary.

    Returns the recomputed ledger after verifying that its cumulative
    totals equal the stored summary row for the run.
    """
    _, ledger, cfg = _replay_scan(output_dir, None, run_index)
    summary_path = Path(output_dir) / SUMMARY_FILE
    with open(summary_path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        row = None
        for line in fh:
            fields = line.rstrip("\n").split(",")
            if fields[0] == str(run_index + 1):
                row = dict(zip(header, fields))
                break
    if row is None:
        raise ReplayMismatchError(f"run {run_index + 1} missing from summary")
    checks = {
        "reward": ledger.cum_reward,
        "cost": ledger.cum_cost,
        "welfare": ledger.cum_welfare,
        "payment": ledger.cum_payment,
    }
    for name, value in checks.items():
        if row[name] != _fmt(value):
            raise ReplayMismatchError(
                f"summary {name} mismatch: stored {row[name]}, replayed {_fmt(value)}")
    return ledger
