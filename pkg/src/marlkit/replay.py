"""Fixed-capacity replay of joint multi-agent transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class Transition:
    joint_obs: list
    joint_actions: list
    joint_rewards: list
    joint_next_obs: list
    done: bool

    def __post_init__(self):
        n = len(self.joint_obs)
        if not (len(self.joint_actions) == len(self.joint_rewards) == len(self.joint_next_obs) == n):
            raise ShapeError("all per-agent lists of a transition must have the same length")


@dataclass
class JointBatch:
    """Stacked sample: ``obs[i]`` is (batch, obs_dim_i) for agent i."""

    obs: list
    actions: list
    rewards: np.ndarray  # (batch, n_agents)
    next_obs: list
    dones: np.ndarray    # (batch,)

    @property
    def n_agents(self):
        return len(self.obs)

    def __len__(self):
        return len(self.dones)


class ReplayBuffer:
    """Ring buffer; the oldest transition is evicted first once full.

    Storage is allocated on the first push, whose shapes every later push
    must match.
    """

    def __init__(self, capacity):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.write_index = 0
        self.count = 0
        self._obs = self._next = self._act = None

    def __len__(self):
        return self.count

    def _allocate(self, t):
        cap = self.capacity
        self._obs = [np.zeros((cap, len(np.atleast_1d(o)))) for o in t.joint_obs]
        self._next = [np.zeros_like(a) for a in self._obs]
        self._act = [np.zeros((cap,) + np.shape(a)) for a in t.joint_actions]
        self._rew = np.zeros((cap, len(t.joint_rewards)))
        self._done = np.zeros(cap, dtype=bool)

    def _check(self, t):
        if len(t.joint_obs) != len(self._obs):
            raise ShapeError(f"transition has {len(t.joint_obs)} agents, buffer holds {len(self._obs)}")
        for i, (o, o2, a) in enumerate(zip(t.joint_obs, t.joint_next_obs, t.joint_actions)):
            width = self._obs[i].shape[1]
            if np.shape(o) != (width,) or np.shape(o2) != (width,):
                raise ShapeError(f"agent {i}: observation length differs from the buffer's ({width})")
            if np.shape(a) != self._act[i].shape[1:]:
                raise ShapeError(f"agent {i}: action shape differs from the buffer's")

    def push(self, t):
        if self._obs is None:
            self._allocate(t)
        self._check(t)
        k = self.write_index
        for i in range(len(self._obs)):
            self._obs[i][k] = t.joint_obs[i]
            self._next[i][k] = t.joint_next_obs[i]
            self._act[i][k] = t.joint_actions[i]
        self._rew[k] = t.joint_rewards
        self._done[k] = bool(t.done)
        self.write_index = (k + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def _physical(self, logical):
        start = (self.write_index - self.count) % self.capacity
        return (start + np.asarray(logical)) % self.capacity

    def _indices(self, batch_size, rng):
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.count == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self._physical(rng.integers(0, self.count, size=batch_size))

    def _transition(self, k):
        return Transition(
            [o[k].copy() for o in self._obs],
            [a[k].copy() if a.ndim > 1 else a[k].item() for a in self._act],
            list(self._rew[k]),
            [o[k].copy() for o in self._next],
            bool(self._done[k]),
        )

    def contents(self):
        """All stored transitions, oldest first."""
        return [self._transition(k) for k in self._physical(np.arange(self.count))]

    def sample(self, batch_size, rng):
        """Uniform sample with replacement, as a list of transitions.

        With replacement a batch may exceed ``count``; only an empty buffer
        is an error.
        """
        return [self._transition(k) for k in self._indices(batch_size, rng)]

    def sample_batch(self, batch_size, rng):
        """Same draw as :meth:`sample` but stacked into a :class:`JointBatch`."""
        idx = self._indices(batch_size, rng)
        return JointBatch(
            [o[idx] for o in self._obs],
            [a[idx] for a in self._act],
            self._rew[idx],
            [o[idx] for o in self._next],
            self._done[idx],
        )


def replay_push(buffer, t):
    buffer.push(t)


def replay_sample(buffer, batch_size, rng):
    return buffer.sample(batch_size, rng)
