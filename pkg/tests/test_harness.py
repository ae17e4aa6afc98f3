from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from crowdbandit.agents import AgentPolicy
from crowdbandit.env import ArmSpec
from crowdbandit.harness import (
    AGGREGATE_FILE,
    METADATA_FILE,
    SLOTS_FILE,
    SUMMARY_FILE,
    ConfigError,
    ReplayMismatchError,
    RunConfig,
    parse_config,
    preset_large_scale,
    preset_small_scale,
    replay,
    replay_all,
    run,
    serialize_config,
    simulate_run,
)
from crowdbandit import cli


def _tiny_config(tmp_path, **overrides):
    base = dict(
        K=2, N=2, T=40, R=2,
        arms=(ArmSpec.bernoulli(0.4), ArmSpec.bernoulli(0.8)),
        cost_model="edge-computing",
        phi=(0.6, 0.4),
        seed=7,
        output_dir=str(tmp_path / "out"),
        saa_samples=200,
        saa_iterations=60,
    )
    base.update(overrides)
    return RunConfig(**base)


# -- config round-trip -----------------------------------------------------

def test_config_round_trip_small_preset():
    cfg = preset_small_scale()
    assert parse_config(serialize_config(cfg)) == cfg


def test_config_round_trip_large_preset():
    for cfg in preset_large_scale(T=100_000):
        assert parse_config(serialize_config(cfg)) == cfg


def test_config_round_trip_truncated_normal_and_policies(tmp_path):
    cfg = _tiny_config(
        tmp_path,
        cost_model="truncated-normal",
        cost_mu=0.25, cost_sigma=0.05, c_min=0.1,
        policies=(AgentPolicy.overbid(0.1), AgentPolicy.random_misreport(3)),
        eta=0.05,
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_config_round_trip_uniform_arms(tmp_path):
    cfg = _tiny_config(tmp_path, arms=(ArmSpec.uniform(0.1, 0.5),
                                       ArmSpec.bernoulli(0.9)))
    assert parse_config(serialize_config(cfg)) == cfg


def test_config_parse_errors():
    with pytest.raises(ConfigError):
        parse_config("K = 1\n")  # missing keys
    cfg = preset_small_scale()
    text = serialize_config(cfg)
    with pytest.raises(ConfigError):
        parse_config(text + "mystery = 1\n")
    with pytest.raises(ConfigError):
        parse_config(text.replace("phi = 0.7 0.3", "phi = 0.7"))
    with pytest.raises(ConfigError):
        parse_config(text + "K = 5\n")  # duplicate


def test_config_comments_and_blank_lines():
    cfg = preset_small_scale()
    text = "# header comment\n\n" + serialize_config(cfg).replace(
        "K = 5", "K = 5  # five arms")
    assert parse_config(text) == cfg


def test_config_validation():
    with pytest.raises(ConfigError):
        _tiny_config(Path("."), K=0)
    with pytest.raises(ConfigError):
        _tiny_config(Path("."), phi=(0.5,))
    with pytest.raises(ConfigError):
        _tiny_config(Path("."), phi=None)  # neither phi nor alpha
    with pytest.raises(ConfigError):
        _tiny_config(Path("."), phi=(1.5, 0.5))


def test_homogeneous_phi_expansion():
    cfg = _tiny_config(Path("."), phi=None, alpha=0.8)
    assert cfg.phi_vector() == (0.4, 0.4)
    cfg1 = dataclasses.replace(cfg, N=1, policies=())
    assert cfg1.phi_vector() == (0.8,)


# -- presets ----------------------------------------------------------------

def test_small_scale_preset_parameters():
    cfg = preset_small_scale()
    assert cfg.K == 5 and cfg.N == 2
    assert cfg.mean_rewards() == (0.1, 0.3, 0.5, 0.7, 0.9)
    phi = cfg.phi_vector()
    assert phi == (0.7, 0.3)
    assert sum(phi) == pytest.approx(1.0)
    assert min(cfg.K + sum(phi), cfg.N) == 2  # theta
    assert cfg.cost_model == "edge-computing"
    assert cfg.energy_mu == 0.05 and cfg.energy_sigma == 0.02
    assert cfg.energy_max == 0.1


def test_large_scale_preset_sweep():
    configs = preset_large_scale(alpha=1.0, beta=0.2, T=100_000)
    assert [c.N for c in configs] == [2, 4, 6, 8, 10]
    for c in configs:
        assert sum(c.phi_vector()) == pytest.approx(1.0)
        assert c.slot_rows is False
    single = preset_large_scale(alpha=1.0, beta=0.2, T=100_000, ns=[1])
    assert single[0].phi_vector() == (1.0,)


def test_large_scale_preset_validation():
    with pytest.raises(ConfigError):
        preset_large_scale(beta=0.5)
    with pytest.raises(ConfigError):
        preset_large_scale(alpha=-1.0)
    with pytest.raises(ConfigError):
        preset_large_scale(T=100_000, ns=[50])


# -- runs ---------------------------------------------------------------------

def test_single_slot_run_matches_hand_trace(tmp_path):
    cfg = RunConfig(
        K=1, N=1, T=1, R=1,
        arms=(ArmSpec.bernoulli(1.0),),
        cost_model="truncated-normal", cost_mu=0.0, cost_sigma=0.0,
        phi=(0.3,), eta=0.1, seed=5,
        output_dir=str(tmp_path / "one"),
        saa_samples=50, saa_iterations=40,
    )
    out = run(cfg)
    lines = (tmp_path / "one" / SLOTS_FILE).read_text().splitlines()
    assert lines[0] == "run,slot,rhat_1,assignments,pay_1,lambda_1,reward,cost,welfare,profit"
    assert lines[1] == "1,1,1.0,1:1,1.0,0.0,1.0,0.0,1.0,0.0"
    ledger = out.ledgers[0]
    assert ledger.cum_welfare == 1.0
    assert ledger.per_agent_utilization == [1]
    # dual after the slot: 0 + 0.1 * (1 - 0.3)
    assert out.metrics[0].vio == pytest.approx(max(0.0, 1 - 0.3), abs=1e-12)


def test_rerun_same_seed_byte_identical(tmp_path):
    cfg = _tiny_config(tmp_path, T=60, R=2)
    run(cfg, output_dir=tmp_path / "a")
    run(cfg, output_dir=tmp_path / "b")
    for name in (SLOTS_FILE, SUMMARY_FILE, AGGREGATE_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_distinct_seeds_differ(tmp_path):
    cfg = _tiny_config(tmp_path, T=60, R=1)
    run(cfg, output_dir=tmp_path / "a")
    run(dataclasses.replace(cfg, seed=8), output_dir=tmp_path / "b")
    assert (tmp_path / "a" / SLOTS_FILE).read_bytes() != (tmp_path / "b" / SLOTS_FILE).read_bytes()


def test_summary_means_equal_per_run_average(tmp_path):
    cfg = _tiny_config(tmp_path, R=2, T=80)
    out = run(cfg)
    meta = json.loads((Path(cfg.output_dir) / METADATA_FILE).read_text())
    for name in ("vio", "pro", "deg", "reg"):
        values = [getattr(m, name) for m in out.metrics]
        assert meta["summary"][f"{name}_mean"] == pytest.approx(
            float(np.mean(values)), abs=1e-9)
    mean, std = out.metric_mean_std("pro")
    assert mean == pytest.approx(float(np.mean([m.pro for m in out.metrics])))
    assert std == pytest.approx(float(np.std([m.pro for m in out.metrics])))


def test_slot_rows_off_skips_row_artifacts(tmp_path):
    cfg = _tiny_config(tmp_path, slot_rows=False)
    out = run(cfg)
    assert not (Path(cfg.output_dir) / SLOTS_FILE).exists()
    assert not (Path(cfg.output_dir) / AGGREGATE_FILE).exists()
    assert (Path(cfg.output_dir) / SUMMARY_FILE).exists()
    assert out.metrics


def test_row_count_equals_horizon_per_run(tmp_path):
    cfg = _tiny_config(tmp_path, T=25, R=3)
    run(cfg)
    lines = (Path(cfg.output_dir) / SLOTS_FILE).read_text().splitlines()
    assert len(lines) == 1 + 25 * 3
    for r in range(3):
        rows = [l for l in lines[1:] if l.startswith(f"{r + 1},")]
        assert len(rows) == 25
        assert [int(row.split(",")[1]) for row in rows] == list(range(1, 26))


def test_aggregate_file_running_mean(tmp_path):
    cfg = _tiny_config(tmp_path, T=30, R=2)
    run(cfg)
    agg = (Path(cfg.output_dir) / AGGREGATE_FILE).read_text().splitlines()
    header = agg[0].split(",")
    assert header[0] == "slot"
    assert "welfare_mean" in header and "welfare_lo3" in header
    assert header[-1] == "r_max"
    first = agg[1].split(",")
    assert float(first[header.index("r_max")]) == 0.8
    # band is symmetric around the mean
    i = header.index("welfare_mean")
    assert (float(first[i]) - float(first[i + 1])) == pytest.approx(
        float(first[i + 2]) - float(first[i]), abs=1e-9)


def test_simulate_run_ledger_consistency(tmp_path):
    cfg = _tiny_config(tmp_path, T=200, R=1)
    ledger = simulate_run(cfg, 0)
    assert ledger.slots == 200
    assert ledger.cum_welfare == pytest.approx(
        ledger.cum_reward - ledger.cum_cost, abs=1e-9 * 200)
    assert all(u <= 200 for u in ledger.per_agent_utilization)
    assert ledger.all_participated
    assert ledger.min_payoff >= -1e-9


# -- replay -------------------------------------------------------------------

def test_replay_first_and_final_slots(tmp_path):
    cfg = _tiny_config(tmp_path, T=50, R=2)
    out = run(cfg)
    record = replay(cfg.output_dir, 1)
    assert record.slot == 1
    record = replay(cfg.output_dir, 50, run_index=1)
    assert record.slot == 50
    ledger = replay_all(cfg.output_dir, run_index=1)
    assert ledger.cum_welfare == out.ledgers[1].cum_welfare


def test_replay_detects_tampered_row(tmp_path):
    cfg = _tiny_config(tmp_path, T=30, R=1)
    run(cfg)
    slots_path = Path(cfg.output_dir) / SLOTS_FILE
    lines = slots_path.read_text().splitlines()
    fields = lines[10].split(",")
    fields[-1] = repr(float(fields[-1]) + 0.5)
    lines[10] = ",".join(fields)
    slots_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ReplayMismatchError):
        replay(cfg.output_dir, 30)
    # rows after the target are not touched
    record = replay(cfg.output_dir, 5)
    assert record.slot == 5


def test_replay_detects_truncated_rows(tmp_path):
    cfg = _tiny_config(tmp_path, T=30, R=1)
    run(cfg)
    slots_path = Path(cfg.output_dir) / SLOTS_FILE
    lines = slots_path.read_text().splitlines()
    slots_path.write_text("\n".join(lines[:20]) + "\n")
    with pytest.raises(ReplayMismatchError):
        replay(cfg.output_dir, 30)


def test_replay_validates_arguments(tmp_path):
    cfg = _tiny_config(tmp_path, T=10, R=1)
    run(cfg)
    with pytest.raises(ValueError):
        replay(cfg.output_dir, 0)
    with pytest.raises(ValueError):
        replay(cfg.output_dir, 11)
    with pytest.raises(ValueError):
        replay(cfg.output_dir, 5, run_index=3)
    with pytest.raises(FileNotFoundError):
        replay(tmp_path / "missing", 1)


# -- CLI ----------------------------------------------------------------------

def test_cli_preset_small_round_trips(capsys):
    assert cli.main(["preset", "small", "--T", "500"]) == 0
    text = capsys.readouterr().out
    cfg = parse_config(text)
    assert cfg.T == 500 and cfg.K == 5


def test_cli_preset_large_writes_files(tmp_path, capsys):
    assert cli.main(["preset", "large", "--T", "100000",
                     "--out", str(tmp_path / "cfgs")]) == 0
    paths = sorted((tmp_path / "cfgs").glob("*.cfg"))
    assert len(paths) == 5
    cfg = parse_config(paths[0].read_text())
    assert cfg.alpha == 1.0


def test_cli_run_and_replay(tmp_path, capsys):
    cfg = _tiny_config(tmp_path, T=25, R=1)
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(serialize_config(cfg))
    assert cli.main(["run", str(cfg_path), "--out", str(tmp_path / "cli-out")]) == 0
    out = capsys.readouterr().out
    assert "Reg(T)" in out and "Vio(T)" in out
    assert cli.main(["replay", str(tmp_path / "cli-out"), "--slot", "10"]) == 0
    assert "replay ok" in capsys.readouterr().out
    assert cli.main(["replay", str(tmp_path / "cli-out"), "--all"]) == 0


def test_cli_oracle(tmp_path, capsys):
    cfg = _tiny_config(tmp_path, T=25, R=1)
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(serialize_config(cfg))
    assert cli.main(["oracle", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "S*" in out and "S+" in out and "Vio bound" in out


def test_cli_replay_reports_mismatch(tmp_path, capsys):
    cfg = _tiny_config(tmp_path, T=20, R=1)
    run(cfg)
    slots_path = Path(cfg.output_dir) / SLOTS_FILE
    text = slots_path.read_text().splitlines()
    cols = text[5].split(",")
    cols[-1] = "99.0"
    text[5] = ",".join(cols)
    slots_path.write_text("\n".join(text) + "\n")
    assert cli.main(["replay", cfg.output_dir, "--all"]) == 1
    assert "mismatch" in capsys.readouterr().err
