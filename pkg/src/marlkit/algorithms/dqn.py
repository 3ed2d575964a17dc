"""Deep Q-learning with a soft-updated target network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..nn import Hyperparams, OptimizerState, mlp_init, soft_update
from .common import apply_gradients, as_joint_batch, check_loss, epsilon_greedy


@dataclass
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` acting steps."""

    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 10_000

    def value(self, step):
        if self.decay_steps <= 0:
            return self.end
        frac = min(1.0, step / self.decay_steps)
        return self.start + frac * (self.end - self.start)


class DqnLearner:
    algorithm = "dqn"

    def __init__(self, obs_dim, n_actions, hp=None, seed=0, schedule=None, q_net=None,
                 hidden_activation="tanh"):
        self.hp = hp or Hyperparams()
        self.obs_dim, self.n_actions = int(obs_dim), int(n_actions)
        self.hidden_activation = hidden_activation
        self.rng = np.random.default_rng(seed)
        sizes = [self.obs_dim, *self.hp.hidden_sizes, self.n_actions]
        self.q_net = q_net if q_net is not None else mlp_init(sizes, (hidden_activation, "identity"), self.rng)
        if self.q_net.n_inputs != self.obs_dim or self.q_net.n_outputs != self.n_actions:
            raise ShapeError("q_net does not match obs_dim/n_actions")
        self.q_target = self.q_net.copy()
        self.opt = OptimizerState.for_net(self.q_net, "adam", self.hp.learning_rate)
        self.schedule = schedule or EpsilonSchedule(self.hp.epsilon_explore, self.hp.epsilon_explore, 0)
        self.act_steps = 0
        self.updates = 0

    @property
    def epsilon(self):
        return self.schedule.value(self.act_steps)

    def spec(self):
        s = self.schedule
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions,
                "hidden_activation": self.hidden_activation,
                "schedule": {"start": s.start, "end": s.end, "decay_steps": s.decay_steps},
                "act_steps": self.act_steps, "updates": self.updates}

    @classmethod
    def from_spec(cls, spec, hp, seed=0):
        learner = cls(spec["obs_dim"], spec["n_actions"], hp, seed, EpsilonSchedule(**spec["schedule"]),
                      hidden_activation=spec["hidden_activation"])
        learner.act_steps = spec["act_steps"]
        learner.updates = spec["updates"]
        return learner

    def optimizers(self):
        return {"q_net": self.opt}

    def networks(self):
        return {"q_net": self.q_net, "q_target": self.q_target}

    def act(self, obs, explore=True):
        q = self.q_net(np.asarray(obs, dtype=np.float64))
        if not explore:
            return int(np.argmax(q))
        a = epsilon_greedy(q, self.epsilon, self.rng)
        self.act_steps += 1
        return a

    def stored_action(self, action):
        return int(action)

    def update(self, batch):
        return dqn_update(self, batch)


def dqn_update(learner, batch):
    """One TD step on the taken actions; returns the mean squared TD error."""
    b = as_joint_batch(batch)
    if b.n_agents != 1:
        raise ShapeError("dqn_update expects single-agent transitions")
    o, o2 = b.obs[0], b.next_obs[0]
    a = b.actions[0].astype(int).ravel()
    r, d = b.rewards[:, 0], b.dones.astype(np.float64)
    if o.shape[1] != learner.obs_dim or len(a) != len(o):
        raise ShapeError("batch does not match the learner's observation size")
    if np.any(a < 0) or np.any(a >= learner.n_actions):
        raise ShapeError("batch holds actions outside the learner's action range")
    hp = learner.hp
    y = r + hp.gamma * (1.0 - d) * learner.q_target(o2).max(axis=1)
    q, cache = learner.q_net.forward_cached(o)
    rows = np.arange(len(a))
    err = q[rows, a] - y
    loss = check_loss(np.mean(err ** 2), "DQN loss")
    upstream = np.zeros_like(q)
    upstream[rows, a] = 2.0 * err / len(a)
    grads, _ = learner.q_net.backward_cached(cache, upstream)
    apply_gradients(learner.q_net, grads, learner.opt, hp.max_grad_norm)
    soft_update(learner.q_target, learner.q_net, hp.tau)
    learner.updates += 1
    return loss

