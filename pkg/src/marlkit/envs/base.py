"""Engine-agnostic multi-agent environment contract.

An environment exposes a fixed number of agents, one observation and one
action space per agent, and a ``teams`` mapping used for bookkeeping. The
per-agent lists in a :class:`StepResult` always have ``n_agents`` entries;
agents that died receive zero observations and must be sent their no-op
action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ActionError, EpisodeDoneError, ShapeError


@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    size: int
    bounds: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("space size must be >= 1")
        if self.kind == "continuous" and self.bounds is not None:
            if len(self.bounds) != self.size:
                raise ValueError("need one (low, high) pair per dimension")
            for lo, hi in self.bounds:
                if not lo < hi:
                    raise ValueError(f"empty bound ({lo}, {hi})")

    def contains(self, action):
        if self.kind == "discrete":
            return isinstance(action, (int, np.integer)) and 0 <= action < self.size
        a = np.asarray(action, dtype=float)
        if a.shape != (self.size,) or not np.all(np.isfinite(a)):
            return False
        if self.bounds is None:
            return True
        lo, hi = np.asarray(self.bounds, dtype=float).T
        return bool(np.all(a >= lo) and np.all(a <= hi))


@dataclass
class StepResult:
    observations: list
    rewards: np.ndarray
    agent_done: np.ndarray
    episode_done: bool
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.observations)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.agent_done = np.asarray(self.agent_done, dtype=bool)
        if self.rewards.shape != (n,) or self.agent_done.shape != (n,):
            raise ShapeError("per-agent fields must all have one entry per agent")
        if n and self.agent_done.all():
            self.episode_done = True


class MultiAgentEnv:
    """Base class; subclasses implement ``_reset`` and ``_step``."""

    n_agents: int
    observation_spaces: list
    action_spaces: list
    teams: dict
    noop_action = None

    def __init__(self):
        self._done = True

    @property
    def done(self):
        return self._done

    def reset(self, seed):
        obs = self._reset(int(seed))
        self._done = False
        return obs

    def step(self, actions):
        if self._done:
            raise EpisodeDoneError("episode is over; call reset() first")
        if len(actions) != self.n_agents:
            raise ShapeError(f"expected {self.n_agents} actions, got {len(actions)}")
        for i, (a, space) in enumerate(zip(actions, self.action_spaces)):
            if not space.contains(a):
                raise ActionError(f"agent {i}: action {a!r} outside {space}")
        result = self._step(list(actions))
        self._done = bool(result.episode_done)
        return result

    def team_of(self, agent):
        for team, members in self.teams.items():
            if agent in members:
                return team
        raise KeyError(agent)

    def _reset(self, seed):
        raise NotImplementedError

    def _step(self, actions):
        raise NotImplementedError


def env_reset(env, seed):
    return env.reset(seed)


def env_step(env, actions):
    return env.step(actions)
