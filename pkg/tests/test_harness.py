"""Config validation, checkpoints, training files, export, evaluation and the CLI."""

import csv
import json
import struct

import numpy as np
import pytest
import yaml

from marlkit.algorithms import DqnLearner, MaddpgLearner
from marlkit.cli import main
from marlkit.errors import CheckpointError, ConfigError
from marlkit.harness.checkpoint import checkpoint_bytes, load_checkpoint, read_header, save_checkpoint
from marlkit.harness.config import config_from_dict, parse_config
from marlkit.harness.evaluation import (evaluate_command, evaluate_policy, learner_policy, oracle_policy,
                                        run_episode)
from marlkit.harness.export import export_metrics, recompute_win_rate
from marlkit.harness.runtime import learner_env
from marlkit.harness.training import train_command, trailing_mean
from marlkit.nn import Hyperparams


def cover_cfg(tmp_path, **over):
    raw = {
        "env": {"name": "take_cover", "n_layouts": 2, "step_cap": 100},
        "algorithm": {"name": "dqn", "epsilon_decay_steps": 500,
                      "hyperparams": {"batch_size": 32, "hidden_sizes": [16, 16]}},
        "seeds": [3],
        "total_steps": 1000,
        "metrics_every": 250,
        "checkpoint_every": 500,
        "eval": {"episodes": 4},
        "output_dir": str(tmp_path / "run"),
    }
    raw.update(over)
    return config_from_dict(raw)


def room_cfg(tmp_path, **over):
    raw = {
        "env": {"name": "room_clear", "step_cap": 40},
        "algorithm": {"name": "maddpg", "hyperparams": {"batch_size": 16, "hidden_sizes": [16]}},
        "seeds": [0],
        "total_episodes": 6,
        "metrics_every": 3,
        "eval": {"episodes": 3},
        "output_dir": str(tmp_path / "room"),
    }
    raw.update(over)
    return config_from_dict(raw)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- config ----------------------------------------------------------------------------

MINIMAL = """
env: {name: take_cover}
algorithm: {name: ppo}
total_steps: 100
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.seeds == [0]
    assert cfg.env["n_layouts"] == 3 and cfg.env["step_cap"] == 500
    assert cfg.algo["horizon"] == 128
    assert cfg.hyperparams == Hyperparams()
    assert cfg.metrics_every == 5 and cfg.budget_unit == "steps"


def test_misspelt_hyperparameter_names_the_dotted_key():
    raw = yaml.safe_load(MINIMAL)
    raw["algorithm"]["hyperparams"] = {"gamm": 0.9}
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    assert exc.value.key == "algorithm.hyperparams.gamm"
    assert "algorithm.hyperparams.gamm" in str(exc.value)


@pytest.mark.parametrize("section, key, value, dotted", [
    ("hyperparams", "gamma", 1.5, "algorithm.hyperparams.gamma"),
    ("hyperparams", "batch_size", 0, "algorithm.hyperparams.batch_size"),
    ("env", "n_rays", "many", "env.n_rays"),
    ("top", "workers", 0, "workers"),
    ("eval", "episodes", -1, "eval.episodes"),
])
def test_out_of_range_values_name_their_key(section, key, value, dotted):
    raw = yaml.safe_load(MINIMAL)
    if section == "hyperparams":
        raw["algorithm"]["hyperparams"] = {key: value}
    elif section == "env":
        raw["env"][key] = value
    elif section == "eval":
        raw["eval"] = {key: value}
    else:
        raw[key] = value
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    assert exc.value.key == dotted


def test_missing_required_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config("algorithm: {name: ppo}\ntotal_steps: 10\n")
    assert exc.value.key == "env"
    with pytest.raises(ConfigError) as exc:
        parse_config("env: {n_layouts: 2}\nalgorithm: {name: ppo}\ntotal_steps: 10\n")
    assert exc.value.key == "env.name"
    with pytest.raises(ConfigError) as exc:
        parse_config("env: {name: take_cover}\nalgorithm: {name: ppo}\n")
    assert exc.value.key == "total_steps"


def test_incompatible_combinations_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("env: {name: room_clear}\nalgorithm: {name: dqn}\ntotal_steps: 10\n")
    assert exc.value.key == "algorithm.name"
    with pytest.raises(ConfigError) as exc:
        parse_config("env: {name: room_clear, n_red: 1}\nalgorithm: {name: dagger}\ntotal_steps: 10\n")
    assert exc.value.key == "algorithm.name"
    with pytest.raises(ConfigError):
        parse_config("env: [1, 2")


# -- checkpoints --------------------------------------------------------------------------

def trained_dqn():
    learner = DqnLearner(5, 3, Hyperparams(batch_size=8, hidden_sizes=(8,)), seed=4)
    rng = np.random.default_rng(0)
    from marlkit.replay import ReplayBuffer, Transition
    buf = ReplayBuffer(100)
    for _ in range(40):
        buf.push(Transition([rng.normal(size=5)], [int(rng.integers(3))], [rng.normal()],
                            [rng.normal(size=5)], bool(rng.random() < 0.2)))
    for _ in range(10):
        learner.update(buf.sample_batch(8, rng))
    return learner


def test_checkpoint_roundtrip_reproduces_outputs(tmp_path):
    learner = trained_dqn()
    path = tmp_path / "a.ckpt"
    save_checkpoint(learner, path, {"step": 17})
    loaded, counters = load_checkpoint(path)
    assert counters == {"step": 17}
    x = np.random.default_rng(1).normal(size=(100, 5))
    # stored parameters are float32; compare against the rounded originals
    ref = learner.q_net.copy()
    for p in ref.parameters():
        p[...] = p.astype(np.float32)
    np.testing.assert_array_equal(loaded.q_net(x), ref(x))
    assert loaded.opt.step_count == learner.opt.step_count
    assert loaded.rng.bit_generator.state == learner.rng.bit_generator.state


def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    learner = MaddpgLearner([4, 4], [3, 3], Hyperparams(hidden_sizes=(6,)), seed=2)
    first = checkpoint_bytes(learner, {"episode": 3})
    path = tmp_path / "m.ckpt"
    path.write_bytes(first)
    loaded, counters = load_checkpoint(path)
    assert checkpoint_bytes(loaded, counters) == first


def test_checkpoint_corruption_is_reported(tmp_path):
    data = checkpoint_bytes(trained_dqn())
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)
    bad.write_bytes(data[:8] + struct.pack("<I", 99) + data[12:])
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(bad)
    bad.write_bytes(data[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(bad)
    bad.write_bytes(data[:20])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(bad)
    flipped = bytearray(data)
    flipped[-1] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(bad)


def test_header_records_architecture_and_algorithm():
    header, payload = read_header(checkpoint_bytes(trained_dqn(), {"step": 1}))
    assert header["algorithm"] == "dqn"
    assert header["architecture"]["q_net"]["layer_sizes"] == [5, 8, 3]
    assert header["payload_bytes"] == len(payload)


# -- training -----------------------------------------------------------------------------

def test_train_writes_files_and_is_deterministic(tmp_path):
    runs = []
    for name in ("a", "b"):
        cfg = cover_cfg(tmp_path, output_dir=str(tmp_path / name))
        status, summaries = train_command(cfg)
        assert status == 0 and summaries[0]["steps"] == 1000
        runs.append(tmp_path / name / "seed_3")
    for f in ("metrics.csv", "episodes.csv", "final.ckpt"):
        assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes(), f
    header, rows = read_csv(runs[0] / "metrics.csv")
    assert header[:3] == ["step", "episode", "mean_return_agent"]
    assert "win_rate_trailing_500" in header and "loss" in header
    assert [int(r[0]) for r in rows] == [250, 500, 750, 1000]
    assert sorted(p.name for p in (runs[0] / "checkpoints").iterdir()) == [
        "steps_000000500.ckpt", "steps_000001000.ckpt"]
    assert json.loads((runs[0] / "timing.json").read_text())["seconds"] > 0


def test_trailing_window_matches_episode_log(tmp_path):
    cfg = cover_cfg(tmp_path)
    train_command(cfg)
    d = tmp_path / "run" / "seed_3"
    eh, erows = read_csv(d / "episodes.csv")
    mh, mrows = read_csv(d / "metrics.csv")
    wins = [float(r[eh.index("win")]) for r in erows]
    for r in mrows:
        n = int(r[mh.index("episode")])
        if n == 0:
            continue
        expect = np.mean(wins[max(0, n - 500):n])
        assert abs(float(r[mh.index("win_rate_trailing_500")]) - expect) < 1e-12


def test_room_clear_logs_both_teams(tmp_path):
    cfg = room_cfg(tmp_path)
    status, summaries = train_command(cfg)
    assert status == 0 and summaries[0]["episodes"] == 6
    header, rows = read_csv(tmp_path / "room" / "seed_0" / "episodes.csv")
    assert {"return_red", "return_blue", "win", "no_loss_win"} <= set(header)
    assert len(rows) == 6
    mh, mrows = read_csv(tmp_path / "room" / "seed_0" / "metrics.csv")
    assert {"mean_return_red", "mean_return_blue", "critic_loss", "actor_objective"} <= set(mh)
    assert [int(r[1]) for r in mrows] == [3, 6]


def test_resume_continues_counters(tmp_path):
    short = cover_cfg(tmp_path, total_steps=500)
    train_command(short)
    d = tmp_path / "run" / "seed_3"
    _, before = read_csv(d / "episodes.csv")
    status, summaries = train_command(cover_cfg(tmp_path), resume=True)
    assert status == 0 and summaries[0]["steps"] == 1000
    _, after = read_csv(d / "episodes.csv")
    assert after[:len(before)] == before
    steps = [int(r[1]) for r in after]
    assert steps == sorted(steps) and steps[-1] <= 1000
    assert [int(r[0]) for r in after] == list(range(1, len(after) + 1))
    _, mrows = read_csv(d / "metrics.csv")
    assert [int(r[0]) for r in mrows] == [250, 500, 750, 1000]
    _, counters = load_checkpoint(d / "final.ckpt")
    assert counters["step"] == 1000


# -- export -------------------------------------------------------------------------------

def test_export_merges_seeds(tmp_path):
    cfg = room_cfg(tmp_path, seeds=[0, 1])
    train_command(cfg)
    consolidated, series = export_metrics(tmp_path / "room")
    header, rows = read_csv(consolidated)
    assert header[0] == "seed" and {r[0] for r in rows} == {"0", "1"}
    sh, srows = read_csv(series)
    assert sh == ["episode", "win_rate_seed_0", "win_rate_seed_1", "win_rate_mean"]
    assert len(srows) == 6
    for s in (0, 1):
        rec = recompute_win_rate(tmp_path / "room" / f"seed_{s}" / "episodes.csv")
        col = sh.index(f"win_rate_seed_{s}")
        assert max(abs(float(r[col]) - v) for r, v in zip(srows, rec)) <= 1e-12
    for r in srows:
        assert abs(float(r[3]) - (float(r[1]) + float(r[2])) / 2) <= 1e-12


def test_export_empty_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        export_metrics(tmp_path)


def test_trailing_mean_against_loop():
    x = np.random.default_rng(3).integers(0, 2, size=1300).astype(float)
    got = trailing_mean(x, 500)
    want = [x[max(0, i - 499):i + 1].mean() for i in range(len(x))]
    assert np.max(np.abs(got - want)) < 1e-12


# -- evaluation ---------------------------------------------------------------------------

def test_oracle_reaches_cover_every_episode(tmp_path):
    cfg = cover_cfg(tmp_path, env={"name": "take_cover", "n_layouts": 2, "step_cap": 500})
    report, records = evaluate_policy(cfg, oracle_policy, episodes=6)
    assert report["success_rate"] == 1.0
    assert all(r["agent_steps"] == r["oracle_steps"] for r in records)


def test_noop_red_never_wins(tmp_path):
    cfg = room_cfg(tmp_path)
    report, _ = evaluate_policy(cfg, lambda env, obs: [5] * len(obs), episodes=4)
    assert report["success_rate"] == 0.0


def test_same_seed_same_report(tmp_path):
    cfg = cover_cfg(tmp_path)
    env = learner_env(cfg)
    learner = DqnLearner(env.obs_dim, env.action_spaces[0].size, cfg.hyperparams, seed=0)
    path = tmp_path / "x.ckpt"
    save_checkpoint(learner, path, {"step": 0})
    assert evaluate_command(cfg, path) == evaluate_command(cfg, path)


def test_architecture_mismatch_is_a_checkpoint_error(tmp_path):
    cfg = cover_cfg(tmp_path)
    path = tmp_path / "wrong.ckpt"
    save_checkpoint(DqnLearner(7, 6, cfg.hyperparams, seed=0), path)
    with pytest.raises(CheckpointError, match="architecture"):
        evaluate_command(cfg, path)


def test_run_episode_truncation_counts_as_failure(tmp_path):
    cfg = room_cfg(tmp_path)
    env = learner_env(cfg)
    rec = run_episode(env, lambda e, o: [5] * len(o), seed=0, max_steps=3)
    assert rec["length"] == 3 and not rec["win"]


# -- CLI ------------------------------------------------------------------------------------

def test_cli_train_evaluate_export(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "env": {"name": "take_cover", "n_layouts": 1, "step_cap": 60},
        "algorithm": {"name": "dqn", "hyperparams": {"batch_size": 16, "hidden_sizes": [8]}},
        "seeds": [0], "total_steps": 200, "eval": {"episodes": 2},
        "output_dir": str(tmp_path / "cli"),
    }))
    assert main(["train", str(cfg_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary[0]["steps"] == 200
    ckpt = tmp_path / "cli" / "seed_0" / "final.ckpt"
    assert main(["evaluate", str(cfg_path), str(ckpt)]) == 0
    assert json.loads(capsys.readouterr().out)["clean"]["episodes"] == 2
    assert main(["compare", str(cfg_path), str(ckpt)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["oracle"]["success_rate"] == 1.0
    assert (tmp_path / "cli" / "compare.csv").exists()
    assert main(["export", str(tmp_path / "cli")]) == 0
    assert "consolidated" in json.loads(capsys.readouterr().out)


def test_cli_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("env: {name: take_cover}\nalgorithm: {name: ppo, hyperparams: {gamm: 1}}\ntotal_steps: 5\n")
    assert main(["train", str(bad)]) == 1
    assert "algorithm.hyperparams.gamm" in capsys.readouterr().err
