"""Learner loops and the ``train`` command.

Each seed writes into ``<output_dir>/seed_<s>/``:

* ``episodes.csv``: one row per finished episode (raw log);
* ``metrics.csv``: a row every ``metrics_every`` steps or episodes (same
  unit as the budget) with trailing-window statistics and mean losses;
* ``checkpoints/`` with periodic checkpoints, plus ``final.ckpt``;
* ``timing.json``: wall-clock seconds, kept out of the CSVs so those stay
  bitwise reproducible.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from ..algorithms import DaggerLearner, MaddpgLearner, PpoLearner, RolloutRunner, dagger_iterate, ppo_update
from ..errors import NonFiniteError
from ..meta import derived_seed
from ..replay import ReplayBuffer, Transition
from .checkpoint import load_checkpoint, save_checkpoint
from .runtime import all_teams, build_learner, check_compatible, learner_env, stored_actions, team_act

WINDOW = 500

LOSS_COLUMNS = {
    "dqn": ["loss"],
    "ddpg": ["critic_loss", "actor_objective"],
    "maddpg": ["critic_loss", "actor_objective"],
    "ppo": ["policy_loss", "value_loss", "entropy"],
    "dagger": ["train_loss"],
}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def episode_columns(teams):
    return ["episode", "step", *[f"return_{t}" for t in teams], "length", "win", "no_loss_win"]


def metrics_columns(teams, algorithm):
    return ["step", "episode", *[f"mean_return_{t}" for t in teams], "win_rate_trailing_500",
            "no_loss_win_rate_trailing_500", "episode_length", *LOSS_COLUMNS[algorithm]]


def trailing_mean(values, window=WINDOW):
    """Mean of the last ``window`` entries at every position (shorter prefix at the start)."""
    x = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


class SeedRun:
    """Book-keeping and file output for one seed of a training run."""

    def __init__(self, cfg, seed, directory):
        self.cfg = cfg
        self.seed = seed
        self.dir = Path(directory)
        self.teams = all_teams(cfg)
        self.ep_cols = episode_columns(self.teams)
        self.m_cols = metrics_columns(self.teams, cfg.algorithm)
        self.episodes = []  # rows as dicts
        self.step = 0
        self.episode = 0
        self.losses = []
        self.next_metrics = cfg.metrics_every
        self.next_checkpoint = cfg.checkpoint_every
        self.last_metrics_at = None

    # -- files ---------------------------------------------------------------------------
    def open(self, resume_rows=None, metric_rows=None):
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "checkpoints").mkdir(exist_ok=True)
        self._ep_fh = open(self.dir / "episodes.csv", "w", newline="", encoding="utf-8")
        self._m_fh = open(self.dir / "metrics.csv", "w", newline="", encoding="utf-8")
        self._ep = csv.writer(self._ep_fh, lineterminator="\n")
        self._m = csv.writer(self._m_fh, lineterminator="\n")
        self._ep.writerow(self.ep_cols)
        self._m.writerow(self.m_cols)
        for row in resume_rows or []:
            self._ep.writerow(row)
        for row in metric_rows or []:
            self._m.writerow(row)

    def close(self):
        self._ep_fh.close()
        self._m_fh.close()

    # -- logging -------------------------------------------------------------------------
    @property
    def unit_count(self):
        return self.step if self.cfg.budget_unit == "steps" else self.episode

    def budget_done(self):
        return self.unit_count >= self.cfg.budget

    def log_episode(self, team_returns, length, info):
        self.episode += 1
        win = bool(info.get("win", False))
        survivors = info.get("survivors")
        if survivors is not None:
            n_red = self.cfg.env["n_red"]
            no_loss = win and survivors.get("red", 0) == n_red
        else:
            no_loss = win
        row = {"episode": self.episode, "step": self.step, "length": int(length), "win": win,
               "no_loss_win": bool(no_loss)}
        for t in self.teams:
            row[f"return_{t}"] = float(team_returns.get(t, 0.0))
        self.episodes.append(row)
        self._ep.writerow([_fmt(row[c]) for c in self.ep_cols])

    def add_losses(self, values):
        self.losses.append(tuple(float(v) for v in values))

    def trailing(self, key):
        tail = self.episodes[-WINDOW:]
        if not tail:
            return None
        return float(np.mean([float(r[key]) for r in tail]))

    def metrics_row(self):
        vals = {"step": self.step, "episode": self.episode}
        for t in self.teams:
            vals[f"mean_return_{t}"] = self.trailing(f"return_{t}")
        vals["win_rate_trailing_500"] = self.trailing("win")
        vals["no_loss_win_rate_trailing_500"] = self.trailing("no_loss_win")
        vals["episode_length"] = self.trailing("length")
        names = LOSS_COLUMNS[self.cfg.algorithm]
        mean = np.mean(self.losses, axis=0) if self.losses else [None] * len(names)
        for n, v in zip(names, mean):
            vals[n] = v
        self.losses = []
        self._m.writerow([_fmt(vals[c]) for c in self.m_cols])
        self.last_metrics_at = (self.step, self.episode)
        return vals

    def tick(self, learner, extra):
        """Emit metrics rows and checkpoints whose cadence point has been reached."""
        u = self.unit_count
        if u >= self.next_metrics:
            self.metrics_row()
            while self.next_metrics <= u:
                self.next_metrics += self.cfg.metrics_every
            self._ep_fh.flush()
            self._m_fh.flush()
        if self.next_checkpoint is not None and u >= self.next_checkpoint:
            while self.next_checkpoint <= u:
                self.next_checkpoint += self.cfg.checkpoint_every
            self._ep_fh.flush()
            self._m_fh.flush()
            self.checkpoint(learner, self.dir / "checkpoints" / f"{self.cfg.budget_unit}_{u:09d}.ckpt", extra)

    def counters(self, extra):
        c = {"seed": self.seed, "step": self.step, "episode": self.episode,
             "next_metrics": self.next_metrics, "next_checkpoint": self.next_checkpoint}
        c.update(extra or {})
        return c

    def checkpoint(self, learner, path, extra=None):
        save_checkpoint(learner, path, self.counters(extra))
        return path

    def finish(self, learner, extra):
        if self.last_metrics_at != (self.step, self.episode):
            self.metrics_row()
        self.checkpoint(learner, self.dir / "final.ckpt", extra)


# -- loops -------------------------------------------------------------------------------

def _off_policy(cfg, run, learner, env, state):
    hp = learner.hp
    buffer = ReplayBuffer(hp.buffer_capacity)
    sample_rng = np.random.default_rng(derived_seed(run.seed, 1))
    if "sample_rng" in state:
        sample_rng.bit_generator.state = state["sample_rng"]
    warmup = max(cfg.algo.get("warmup") or 0, hp.batch_size)
    sigma0, sigma1 = hp.noise_sigma, cfg.algo.get("noise_final")
    decay = cfg.algo.get("noise_decay_episodes", 0)
    multi = isinstance(learner, MaddpgLearner)
    extra = lambda: {"sample_rng": sample_rng.bit_generator.state}

    while not run.budget_done():
        if sigma1 is not None and hasattr(learner, "noise_sigma"):
            frac = min(1.0, run.episode / decay) if decay > 0 else 1.0
            learner.noise_sigma = sigma0 + frac * (sigma1 - sigma0)
        obs = env.reset(derived_seed(run.seed, 2, run.episode))
        team_returns, length, done = {}, 0, False
        while not done:
            actions = team_act(learner, obs, explore=True)
            res = env.step(actions)
            buffer.push(Transition(list(obs), stored_actions(learner, actions), list(res.rewards),
                                   list(res.observations), res.episode_done))
            obs, done = res.observations, res.episode_done
            for t, r in res.info.get("team_rewards", {}).items():
                team_returns[t] = team_returns.get(t, 0.0) + r
            length += 1
            run.step += 1
            if len(buffer) >= warmup and run.step % hp.update_every == 0:
                out = learner.update(buffer.sample_batch(hp.batch_size, sample_rng))
                if multi:
                    out = np.mean(np.asarray(out, dtype=np.float64), axis=0)
                run.add_losses(np.atleast_1d(out))
            if cfg.budget_unit == "steps":
                run.tick(learner, extra())
                if run.budget_done():
                    break
        if done:
            run.log_episode(team_returns, length, res.info)
        if cfg.budget_unit == "episodes":
            run.tick(learner, extra())
    return extra()


def _ppo(cfg, run, learner, noisy, state):
    envs = [learner_env(cfg, noisy) for _ in range(cfg.algo["n_envs"])]
    runner = RolloutRunner(envs, seed=state.get("runner_next_seed", derived_seed(run.seed, 2)))
    runner.total_steps = run.step
    seen = 0
    extra = lambda: {"runner_next_seed": runner.next_seed}
    while not run.budget_done():
        rollout = runner.collect(learner, learner.horizon)
        run.add_losses(ppo_update(learner, rollout))
        run.step = runner.total_steps
        for ep in runner.episodes[seen:]:
            run.log_episode(ep["team_returns"], ep["length"], ep["info"])
        seen = len(runner.episodes)
        run.tick(learner, extra())
    return extra()


def _dagger(cfg, run, learner, env, state):
    base = derived_seed(run.seed, 2)
    while not run.budget_done():
        stats = dagger_iterate(learner, env, lambda e: e.oracle_action(),
                               cfg.algo["episodes_per_iteration"], seed=base)
        run.add_losses([stats["train_loss"]])
        for ep in stats["episodes"]:
            run.step += ep["length"]
            run.log_episode(ep["team_returns"], ep["length"], ep["info"])
        run.tick(learner, {})
    return {}


def _read_rows(path, limit_key, limit):
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r for r in rows if int(r[limit_key]) <= limit]


def seed_dir(cfg, seed):
    return Path(cfg.output_dir) / f"seed_{seed}"


def latest_checkpoint(directory):
    directory = Path(directory)
    if (directory / "final.ckpt").exists():
        return directory / "final.ckpt"
    ckpts = sorted((directory / "checkpoints").glob("*.ckpt"))
    return ckpts[-1] if ckpts else None


def train_seed(cfg, seed, resume=False):
    """Train one seed; returns a summary dict (``status`` 0 on success, 2 on a numerical abort)."""
    t0 = time.time()
    directory = seed_dir(cfg, seed)
    run = SeedRun(cfg, seed, directory)
    noisy = bool(cfg.noise and cfg.noise["train"])
    env = learner_env(cfg, noisy)
    state = {}
    ckpt = latest_checkpoint(directory) if resume else None
    if ckpt is not None:
        learner, counters = load_checkpoint(ckpt)
        check_compatible(learner, env)
        state = counters
        run.step, run.episode = counters["step"], counters["episode"]
        run.next_metrics, run.next_checkpoint = counters["next_metrics"], counters["next_checkpoint"]
        ep_rows = _read_rows(directory / "episodes.csv", 0, run.episode)
        m_rows = _read_rows(directory / "metrics.csv", 1, run.episode)
        for r in ep_rows:
            row = dict(zip(run.ep_cols, r))
            run.episodes.append({k: float(v) for k, v in row.items()})
        run.open(ep_rows, m_rows)
        if m_rows:
            run.last_metrics_at = (int(m_rows[-1][0]), int(m_rows[-1][1]))
    else:
        learner = build_learner(cfg, env, seed)
        run.open()
    status, message = 0, ""
    try:
        if isinstance(learner, PpoLearner):
            extra = _ppo(cfg, run, learner, noisy, state)
        elif isinstance(learner, DaggerLearner):
            extra = _dagger(cfg, run, learner, env, state)
        else:
            extra = _off_policy(cfg, run, learner, env, state)
        run.finish(learner, extra)
    except NonFiniteError as exc:
        status = 2
        message = (f"seed {seed}: aborted at step {run.step}, episode {run.episode}: {exc}. "
                   f"Latest checkpoint kept: {latest_checkpoint(directory)}")
        (directory / "error.txt").write_text(message + "\n", encoding="utf-8")
        print(message, file=sys.stderr)
    finally:
        run.close()
    elapsed = time.time() - t0
    (directory / "timing.json").write_text(json.dumps({"seconds": elapsed}) + "\n", encoding="utf-8")
    return {
        "seed": seed, "status": status, "message": message, "steps": run.step, "episodes": run.episode,
        "win_rate_trailing_500": run.trailing("win"),
        "no_loss_win_rate_trailing_500": run.trailing("no_loss_win"),
        "seconds": elapsed, "directory": str(directory),
    }


def _train_seed_job(args):
    return train_seed(*args)


def train_command(cfg, resume=False):
    """Train every configured seed; returns ``(exit_status, per-seed summaries)``.

    With ``workers > 1`` seeds run in separate processes; summaries are
    still returned in seed order.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
    jobs = [(cfg, s, resume) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            summaries = list(pool.map(_train_seed_job, jobs))
    else:
        summaries = [_train_seed_job(j) for j in jobs]
    status = max(s["status"] for s in summaries)
    return status, summaries
