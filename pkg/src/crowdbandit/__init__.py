"""Principal-agent bandit simulation.

A principal who cannot pull arms itself learns their rewards with UCB
estimates while paying selfish, privately-costed agents to pull them.
A per-slot cost-revelation auction with pivot payments makes truthful
bidding a dominant strategy; projected dual ascent enforces long-run
per-agent utilization caps.  Oracles, metric accounting and a CLI
harness reproduce the accompanying welfare and fairness guarantees at
desk scale.
"""
from .agents import AgentPolicy, ParticipationDecision, decide_participation, form_bids
from .env import (
    ArmSpec,
    EdgeComputingCost,
    Environment,
    EnvRealization,
    PriceSeries,
    TruncatedNormalCost,
    load_price_series,
    synthetic_price_series,
)
from .harness import (
    RunConfig,
    RunOutput,
    load_config,
    parse_config,
    preset_large_scale,
    preset_small_scale,
    replay,
    replay_all,
    run,
    serialize_config,
    simulate_run,
)
from .matching import Assignment, brute_force_matching, max_weight_matching
from .mechanism import (
    ArmStats,
    MechanismState,
    Proposal,
    SlotRecord,
    compute_assignment,
    compute_payments,
    dual_update,
    step,
    tuned_step_size,
    ucb_estimate,
    update_arm_stats,
)
from .oracle import (
    BaselineValues,
    MetricLedger,
    Metrics,
    finalize_metrics,
    record_slot,
    s_dagger,
    s_star_dual_saa,
    s_star_exact,
    performance_bounds,
)

__version__ = "0.1.0"
