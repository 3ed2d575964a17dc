"""Deterministic policy gradient with target actor and critic.

Two action modes share one update rule:

* continuous: the actor ends in ``tanh`` and its output is the action;
* discrete: the actor outputs logits, the critic sees the relaxed one-hot
  ``softmax(logits / temperature)``, and the environment receives the argmax.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn import Hyperparams, OptimizerState, mlp_init, soft_update
from .common import apply_gradients, as_joint_batch, check_loss, one_hot, relaxed, relaxed_backward


def build_actor_critic(obs_dim, action_dim, critic_in, hp, rng, discrete, hidden_activation="tanh"):
    """Actor then critic, drawn from ``rng`` in that order."""
    out_act = "identity" if discrete else "tanh"
    actor = mlp_init([obs_dim, *hp.hidden_sizes, action_dim], (hidden_activation, out_act), rng)
    critic = mlp_init([critic_in, *hp.hidden_sizes, 1], (hidden_activation, "identity"), rng)
    return actor, critic


class PolicyHead:
    """Maps actor outputs to the action fed to a critic, and back-propagates through it."""

    def __init__(self, discrete, temperature):
        self.discrete = discrete
        self.temperature = temperature

    def __call__(self, out):
        return relaxed(out, self.temperature) if self.discrete else out

    def backward(self, out, action, upstream):
        if self.discrete:
            return relaxed_backward(action, upstream, self.temperature)
        return upstream

    def explore(self, out, sigma, rng):
        """Executed action for one actor output, with Gaussian exploration noise."""
        if self.discrete:
            noisy = out + sigma * rng.standard_normal(out.shape) if sigma > 0 else out
            return int(np.argmax(noisy))
        noisy = out + sigma * rng.standard_normal(out.shape) if sigma > 0 else out
        return np.clip(noisy, -1.0, 1.0)


def critic_regression(critic, opt, x, y, max_norm):
    """One MSE step of ``critic(x)`` toward ``y``; returns the loss before the step."""
    q, cache = critic.forward_cached(x)
    err = q[:, 0] - y
    loss = check_loss(np.mean(err ** 2), "critic loss")
    grads, _ = critic.backward_cached(cache, (2.0 * err / len(y))[:, None])
    apply_gradients(critic, grads, opt, max_norm)
    return loss


def actor_ascent(actor, opt, head, obs, q_and_grad, action_reg, max_norm):
    """One step ascending mean Q(o, head(actor(o))); returns the objective before the step.

    ``q_and_grad(obs, action)`` returns ``(q, dq/daction)`` for the batch.
    """
    out, cache = actor.forward_cached(obs)
    action = head(out)
    q, dq = q_and_grad(obs, action)
    objective = check_loss(np.mean(q), "actor objective")
    n = len(obs)
    g_out = head.backward(out, action, -dq / n)
    if action_reg > 0:
        g_out = g_out + action_reg * 2.0 * out / out.size
    grads, _ = actor.backward_cached(cache, g_out)
    apply_gradients(actor, grads, opt, max_norm)
    return objective


def critic_q_and_grad(critic, prefix, suffix, slot):
    """Closure giving Q and dQ/d(action) with the action spliced between prefix and suffix."""
    def fn(_obs, action):
        x = np.concatenate([prefix, action, suffix], axis=1)
        q, cache = critic.forward_cached(x)
        _, gin = critic.backward_cached(cache, np.ones_like(q))
        return q[:, 0], gin[:, slot:slot + action.shape[1]]
    return fn


class DdpgLearner:
    algorithm = "ddpg"

    def __init__(self, obs_dim, action_dim, hp=None, seed=0, discrete=True, hidden_activation="tanh"):
        self.hp = hp or Hyperparams()
        self.obs_dim, self.action_dim = int(obs_dim), int(action_dim)
        self.discrete = discrete
        self.hidden_activation = hidden_activation
        self.rng = np.random.default_rng(seed)
        self.actor, self.critic = build_actor_critic(
            self.obs_dim, self.action_dim, self.obs_dim + self.action_dim, self.hp, self.rng,
            discrete, hidden_activation)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = OptimizerState.for_net(self.actor, "adam", self.hp.learning_rate)
        self.critic_opt = OptimizerState.for_net(self.critic, "adam", self.hp.learning_rate)
        self.head = PolicyHead(discrete, self.hp.temperature)
        self.noise_sigma = self.hp.noise_sigma
        self.updates = 0

    def spec(self):
        return {"obs_dim": self.obs_dim, "action_dim": self.action_dim, "discrete": self.discrete,
                "hidden_activation": self.hidden_activation, "noise_sigma": self.noise_sigma,
                "updates": self.updates}

    @classmethod
    def from_spec(cls, spec, hp, seed=0):
        learner = cls(spec["obs_dim"], spec["action_dim"], hp, seed, spec["discrete"], spec["hidden_activation"])
        learner.noise_sigma = spec["noise_sigma"]
        learner.updates = spec["updates"]
        return learner

    def optimizers(self):
        return {"actor": self.actor_opt, "critic": self.critic_opt}

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def act(self, obs, explore=True):
        out = self.actor(np.asarray(obs, dtype=np.float64))
        return self.head.explore(out, self.noise_sigma if explore else 0.0, self.rng)

    def stored_action(self, action):
        return one_hot(action, self.action_dim) if self.discrete else np.asarray(action, dtype=np.float64)

    def update(self, batch):
        return ddpg_update(self, batch)


def ddpg_update(learner, batch, q_and_grad=None):
    """Critic step, actor step, then soft target updates.

    Returns ``(critic_loss, actor_objective)``. ``q_and_grad`` optionally
    replaces the learned critic in the actor step (used for analytic critics).
    """
    b = as_joint_batch(batch)
    if b.n_agents != 1:
        raise ShapeError("ddpg_update expects single-agent transitions")
    o, a, o2 = b.obs[0], b.actions[0], b.next_obs[0]
    if o.shape[1] != learner.obs_dim or a.reshape(len(a), -1).shape[1] != learner.action_dim:
        raise ShapeError("batch does not match the learner's observation/action sizes")
    a = a.reshape(len(a), -1)
    hp = learner.hp
    a2 = learner.head(learner.actor_target(o2))
    q2 = learner.critic_target(np.concatenate([o2, a2], axis=1))[:, 0]
    y = b.rewards[:, 0] + hp.gamma * (1.0 - b.dones) * q2
    critic_loss = critic_regression(learner.critic, learner.critic_opt,
                                    np.concatenate([o, a], axis=1), y, hp.max_grad_norm)
    if q_and_grad is None:
        q_and_grad = critic_q_and_grad(learner.critic, o, np.zeros((len(o), 0)), learner.obs_dim)
    objective = actor_ascent(learner.actor, learner.actor_opt, learner.head, o, q_and_grad,
                             hp.action_reg, hp.max_grad_norm)
    soft_update(learner.actor_target, learner.actor, hp.tau)
    soft_update(learner.critic_target, learner.critic, hp.tau)
    learner.updates += 1
    return critic_loss, objective
