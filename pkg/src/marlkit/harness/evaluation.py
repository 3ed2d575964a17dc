"""Greedy evaluation, the scripted-vs-learned comparison and baselines."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, ShapeError
from .checkpoint import load_checkpoint
from .runtime import RandomPolicy, check_compatible, learner_env, learner_team, team_act


def run_episode(env, policy, seed, max_steps=None):
    """Play one episode; ``policy(env, joint_obs)`` returns the joint action.

    Stops early after ``max_steps`` ticks (counted as a failure). Returns a
    per-episode record.
    """
    obs = env.reset(seed)
    oracle = env.oracle_steps() if hasattr(env, "oracle_steps") else None
    team_returns, length, info = {}, 0, {}
    done = False
    while not done:
        res = env.step(policy(env, obs))
        obs, done, info = res.observations, res.episode_done, res.info
        for t, r in info.get("team_rewards", {}).items():
            team_returns[t] = team_returns.get(t, 0.0) + r
        length += 1
        if max_steps is not None and length >= max_steps and not done:
            info = dict(info, win=False, truncated=True)
            break
    win = bool(info.get("win", False))
    survivors = info.get("survivors")
    no_loss = win and (survivors is None or survivors.get("red") == len(env.teams.get("red", [])))
    return {"seed": int(seed), "win": win, "no_loss_win": bool(no_loss), "length": length,
            "team_returns": team_returns, "oracle_steps": oracle,
            "agent_steps": length if win else None}


def summarize(records, team):
    wins = [r["win"] for r in records]
    report = {
        "episodes": len(records),
        "success_rate": float(np.mean(wins)),
        "no_loss_win_rate": float(np.mean([r["no_loss_win"] for r in records])),
        "mean_return": float(np.mean([r["team_returns"].get(team, 0.0) for r in records])),
        "mean_length": float(np.mean([r["length"] for r in records])),
    }
    if records and records[0]["oracle_steps"] is not None:
        ok = [r for r in records if r["win"]]
        report["median_oracle_steps_all"] = float(np.median([r["oracle_steps"] for r in records]))
        if ok:
            report["median_agent_steps"] = float(np.median([r["agent_steps"] for r in ok]))
            report["median_oracle_steps"] = float(np.median([r["oracle_steps"] for r in ok]))
            report["median_step_ratio"] = float(np.median([r["agent_steps"] / r["oracle_steps"] for r in ok]))
        else:
            report["median_agent_steps"] = report["median_oracle_steps"] = report["median_step_ratio"] = None
    return report


def evaluate_policy(cfg, policy, episodes=None, seed=None, noisy=False, env=None):
    env = env or learner_env(cfg, noisy)
    episodes = cfg.eval["episodes"] if episodes is None else episodes
    seed = cfg.eval["seed"] if seed is None else seed
    records = [run_episode(env, policy, seed + k, cfg.eval["max_steps"]) for k in range(episodes)]
    return summarize(records, learner_team(cfg)), records


def learner_policy(learner):
    return lambda env, obs: team_act(learner, obs, explore=False)


def oracle_policy(env, obs):
    return [env.oracle_action()]


def random_policy(cfg, seed=0):
    env = learner_env(cfg)
    rp = RandomPolicy(env.action_spaces[0].size, env.n_agents, seed)
    return lambda env, obs: rp.act(obs)


def evaluate_learner(cfg, learner, episodes=None, seed=None):
    """Clean report, plus a noisy one when the config declares observation noise."""
    env = learner_env(cfg)
    check_compatible(learner, env)
    clean, _ = evaluate_policy(cfg, learner_policy(learner), episodes, seed, env=env)
    out = {"clean": clean}
    if cfg.noise is not None:
        out["noisy"], _ = evaluate_policy(cfg, learner_policy(learner), episodes, seed, noisy=True)
    return out


def _load_for(cfg, checkpoint_path):
    learner, counters = load_checkpoint(checkpoint_path)
    try:
        check_compatible(learner, learner_env(cfg))
    except ShapeError as exc:
        raise CheckpointError(f"architecture mismatch: {exc}") from None
    return learner, counters


def evaluate_command(cfg, checkpoint_path, episodes=None):
    learner, counters = _load_for(cfg, checkpoint_path)
    report = evaluate_learner(cfg, learner, episodes)
    report["checkpoint"] = str(checkpoint_path)
    report["trained_steps"] = counters.get("step")
    return report


def compare_command(cfg, checkpoint_path, out_csv=None, episodes=None):
    """Learned policy vs the scripted cover oracle on identical take-cover episodes."""
    if cfg.env_name != "take_cover":
        raise ValueError("compare needs the take_cover environment")
    learner, _ = _load_for(cfg, checkpoint_path)
    rl, rl_rows = evaluate_policy(cfg, learner_policy(learner), episodes)
    oracle, or_rows = evaluate_policy(cfg, oracle_policy, episodes)
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "oracle_bfs_steps", "oracle_steps_taken", "agent_steps", "agent_success"])
            for a, b in zip(rl_rows, or_rows):
                w.writerow([a["seed"], a["oracle_steps"], b["length"],
                            "" if a["agent_steps"] is None else a["agent_steps"], int(a["win"])])
    return {"learned": rl, "oracle": oracle}
