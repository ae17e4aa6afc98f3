"""Command-line entry point.

Subcommands:

* ``run <config>``       -- execute a configured batch of seeded runs
* ``preset small|large`` -- write ready-made experiment configs
* ``oracle <config>``    -- print baseline welfare values and bounds
* ``replay <dir>``       -- re-derive stored rows and verify them
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .harness import (
    ReplayMismatchError,
    compute_baselines,
    load_config,
    preset_large_scale,
    preset_small_scale,
    replay,
    replay_all,
    run,
    serialize_config,
)
from .oracle import performance_bounds


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.runs is not None:
        overrides["R"] = args.runs
    if args.out is not None:
        overrides["output_dir"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    out = run(cfg)
    reg_mean, reg_std = out.metric_mean_std("reg")
    vio_mean, vio_std = out.metric_mean_std("vio")
    pro_mean, pro_std = out.metric_mean_std("pro")
    deg_mean, deg_std = out.metric_mean_std("deg")
    print(f"wrote {out.output_dir} ({cfg.R} runs x {cfg.T} slots, "
          f"{out.wall_time_s:.1f}s)")
    print(f"S*={out.baselines.s_star} ({out.baselines.s_star_method}), "
          f"S+={out.baselines.s_dagger}")
    if out.bounds is None:
        print(f"Reg(T) mean={reg_mean:.4g} std={reg_std:.4g}")
        print(f"Vio(T) mean={vio_mean:.4g} std={vio_std:.4g}")
        print(f"Pro(T) mean={pro_mean:.4g} std={pro_std:.4g}")
    else:
        print(f"Reg(T) mean={reg_mean:.4g} std={reg_std:.4g} bound={out.bounds.reg_bound:.4g}")
        print(f"Vio(T) mean={vio_mean:.4g} std={vio_std:.4g} bound={out.bounds.vio_bound:.4g}")
        print(f"Pro(T) mean={pro_mean:.4g} std={pro_std:.4g} floor={out.bounds.pro_lower:.4g}")
    print(f"Deg(T) mean={deg_mean:.4g} std={deg_std:.4g}")
    return 0


def _cmd_preset(args: argparse.Namespace) -> int:
    if args.which == "small":
        cfg = preset_small_scale(T=args.T or 20_000, seed=args.seed)
        text = serialize_config(cfg)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(args.out)
        else:
            sys.stdout.write(text)
        return 0
    configs = preset_large_scale(alpha=args.alpha, beta=args.beta,
                                 T=args.T or 100_000, seed=args.seed)
    out_dir = Path(args.out or "large-scale-configs")
    out_dir.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        path = out_dir / f"N{cfg.N}.cfg"
        path.write_text(serialize_config(cfg), encoding="utf-8")
        print(path)
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    baselines, saa = compute_baselines(cfg)
    print(f"S*  = {baselines.s_star} ({baselines.s_star_method})")
    if saa is not None:
        print(f"      dual bound {saa.dual_bound:.6g}, gap {saa.gap:.3g}")
    print(f"S+  = {baselines.s_dagger}")
    # A-priori bounds: plug the violation bound itself into the regret
    # and profit expressions, which only loosens them.
    apriori = performance_bounds(cfg.K, cfg.T, cfg.phi_vector(), 0.0, cfg.N)
    bounds = performance_bounds(cfg.K, cfg.T, cfg.phi_vector(), apriori.vio_bound, cfg.N)
    print(f"Reg bound = {bounds.reg_bound:.6g}")
    print(f"Vio bound = {bounds.vio_bound:.6g} (delta* = {bounds.delta_star:.4g})")
    print(f"Pro floor = {bounds.pro_lower:.6g}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        if args.all:
            ledger = replay_all(args.dir, run_index=args.run - 1)
            print(f"replay ok: run {args.run}, {ledger.slots} slots verified, "
                  f"welfare {ledger.cum_welfare!r}")
        else:
            if args.slot is None:
                print("error: provide --slot K or --all", file=sys.stderr)
                return 2
            record = replay(args.dir, args.slot, run_index=args.run - 1)
            print(f"replay ok: run {args.run} slot {record.slot}, "
                  f"welfare {record.welfare!r}")
    except ReplayMismatchError as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdbandit",
        description="Principal-agent bandit simulation: UCB learning with "
                    "auction-based agent incentives.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run configuration")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--runs", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_preset = sub.add_parser("preset", help="write a ready-made config")
    p_preset.add_argument("which", choices=["small", "large"])
    p_preset.add_argument("--alpha", type=float, default=1.0)
    p_preset.add_argument("--beta", type=float, default=0.2)
    p_preset.add_argument("--T", type=int, default=None)
    p_preset.add_argument("--seed", type=int, default=2024)
    p_preset.add_argument("--out", default=None)
    p_preset.set_defaults(func=_cmd_preset)

    p_oracle = sub.add_parser("oracle", help="print baselines and bounds")
    p_oracle.add_argument("config")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_replay = sub.add_parser("replay", help="verify stored run artifacts")
    p_replay.add_argument("dir")
    p_replay.add_argument("--slot", type=int, default=None)
    p_replay.add_argument("--run", type=int, default=1)
    p_replay.add_argument("--all", action="store_true")
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
