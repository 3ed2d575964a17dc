"""Builds environments and learners from a :class:`RunConfig`."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..algorithms import (DaggerLearner, DdpgLearner, DqnLearner, EpsilonSchedule, MaddpgLearner,
                          PpoLearner)
from ..envs.grid import GridLayout
from ..envs.room_clear import CombatConfig, RoomClearEnv, arena_layout, default_layout
from ..envs.take_cover import TakeCoverConfig, TakeCoverEnv, generate_layout
from ..envs.wrappers import ControlledTeamEnv, scripted_blue_opponent
from ..errors import ShapeError
from ..meta import NoiseConfig, NoisyObservationEnv


def resolve_layout(name):
    if name == "default":
        return default_layout()
    if name == "arena":
        return arena_layout()
    return GridLayout.from_file(name)


@lru_cache(maxsize=16)
def cover_layouts(n_layouts, layout_seed):
    """The training layouts of a take-cover run: seeds ``1000 * layout_seed + k``."""
    return tuple(generate_layout(1000 * layout_seed + k) for k in range(n_layouts))


def combat_config(env_cfg):
    return CombatConfig(**{k: env_cfg[k] for k in ("hp_max", "attack_damage", "attack_range",
                                                   "kill_reward", "survivor_bonus", "step_cap",
                                                   "view_size")})


def cover_config(env_cfg):
    return TakeCoverConfig(**{k: env_cfg[k] for k in ("step_size", "turn_degrees", "n_rays", "step_cap",
                                                      "move_penalty", "cover_reward", "spawn_jitter")})


def base_env(cfg):
    """The raw environment (all agents exposed)."""
    e = cfg.env
    if cfg.env_name == "room_clear":
        return RoomClearEnv(resolve_layout(e["layout"]), combat_config(e), e["n_red"], e["n_blue"])
    return TakeCoverEnv(list(cover_layouts(e["n_layouts"], e["layout_seed"])), cover_config(e))


def noise_config(cfg):
    if cfg.noise is None:
        return None
    n = cfg.noise
    return NoiseConfig(n["gaussian_sigma"], n["dropout_prob"], frozenset(n["failed_channels"]))


def learner_env(cfg, noisy=False):
    """The environment as the learner sees it: room-clear exposes only red."""
    env = base_env(cfg)
    if cfg.env_name == "room_clear":
        env = ControlledTeamEnv(env, "red", scripted_blue_opponent(env))
    nc = noise_config(cfg)
    if noisy and nc is not None and not nc.is_identity:
        env = NoisyObservationEnv(env, nc)
    return env


def learner_team(cfg):
    return "red" if cfg.env_name == "room_clear" else "agent"


def all_teams(cfg):
    return ["red", "blue"] if cfg.env_name == "room_clear" else ["agent"]


def build_learner(cfg, env, seed):
    hp, a = cfg.hyperparams, cfg.algo
    obs_dims = [s.size for s in env.observation_spaces]
    n_actions = env.action_spaces[0].size
    act = a["hidden_activation"]
    if cfg.algorithm == "maddpg":
        return MaddpgLearner(obs_dims, [s.size for s in env.action_spaces], hp, seed, True, act)
    if len(obs_dims) != 1:
        raise ShapeError(f"{cfg.algorithm} controls exactly one agent, the env exposes {len(obs_dims)}")
    if cfg.algorithm == "dqn":
        sched = EpsilonSchedule(a["epsilon_start"], a["epsilon_end"], a["epsilon_decay_steps"])
        return DqnLearner(obs_dims[0], n_actions, hp, seed, sched, hidden_activation=act)
    if cfg.algorithm == "ddpg":
        return DdpgLearner(obs_dims[0], n_actions, hp, seed, True, act)
    if cfg.algorithm == "ppo":
        return PpoLearner(obs_dims[0], n_actions, hp, seed, a["horizon"], act)
    return DaggerLearner(obs_dims[0], n_actions, hp, seed, a["beta0"], a["beta_decay"], a["train_epochs"], act)


def check_compatible(learner, env):
    """Raise ShapeError unless the learner's input/output sizes fit the env."""
    obs_dims = [s.size for s in env.observation_spaces]
    n_actions = [s.size for s in env.action_spaces]
    if isinstance(learner, MaddpgLearner):
        ok = learner.obs_dims == obs_dims and learner.action_dims == n_actions
    else:
        spec = learner.spec()
        out = spec.get("n_actions", spec.get("action_dim"))
        ok = len(obs_dims) == 1 and spec["obs_dim"] == obs_dims[0] and out == n_actions[0]
    if not ok:
        raise ShapeError(f"learner expects observations {getattr(learner, 'obs_dims', None) or learner.spec()['obs_dim']}"
                         f", environment provides {obs_dims}")


def team_act(learner, joint_obs, explore):
    """Per-agent actions from any learner for a list of observations."""
    if isinstance(learner, MaddpgLearner):
        return learner.act(joint_obs, explore=explore)
    return [learner.act(joint_obs[0], explore=explore)]


def stored_actions(learner, actions):
    if isinstance(learner, MaddpgLearner):
        return [learner.stored_action(a, i) for i, a in enumerate(actions)]
    return [learner.stored_action(actions[0])]


class RandomPolicy:
    """Uniform random discrete actions; ``act`` mirrors the learner interface."""

    def __init__(self, n_actions, n_agents, seed=0):
        self.n_actions = n_actions
        self.n_agents = n_agents
        self.rng = np.random.default_rng(seed)

    def act(self, joint_obs, explore=False):
        return [int(self.rng.integers(self.n_actions)) for _ in range(self.n_agents)]
