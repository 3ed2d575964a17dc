"""Multi-agent DDPG: decentralised actors, one centralised critic per agent.

Agent i's actor sees only its own observation. Its critic sees every agent's
observation followed by every agent's action, in agent order, and predicts
agent i's return.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn import Hyperparams, OptimizerState, soft_update
from .common import as_joint_batch, one_hot
from .ddpg import PolicyHead, actor_ascent, build_actor_critic, critic_q_and_grad, critic_regression


class MaddpgAgent:
    def __init__(self, actor, critic, hp):
        self.actor = actor
        self.critic = critic
        self.actor_target = actor.copy()
        self.critic_target = critic.copy()
        self.actor_opt = OptimizerState.for_net(actor, "adam", hp.learning_rate)
        self.critic_opt = OptimizerState.for_net(critic, "adam", hp.learning_rate)


class MaddpgLearner:
    algorithm = "maddpg"

    def __init__(self, obs_dims, action_dims, hp=None, seed=0, discrete=True, hidden_activation="tanh"):
        if len(obs_dims) != len(action_dims) or not obs_dims:
            raise ShapeError("need one observation and one action size per agent")
        self.hp = hp or Hyperparams()
        self.obs_dims = [int(d) for d in obs_dims]
        self.action_dims = [int(d) for d in action_dims]
        self.discrete = discrete
        self.hidden_activation = hidden_activation
        self.rng = np.random.default_rng(seed)
        critic_in = sum(self.obs_dims) + sum(self.action_dims)
        self.agents = []
        for od, ad in zip(self.obs_dims, self.action_dims):
            actor, critic = build_actor_critic(od, ad, critic_in, self.hp, self.rng, discrete,
                                               hidden_activation)
            self.agents.append(MaddpgAgent(actor, critic, self.hp))
        self.head = PolicyHead(discrete, self.hp.temperature)
        self.noise_sigma = self.hp.noise_sigma
        self.updates = 0

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def critic_input_width(self):
        return sum(self.obs_dims) + sum(self.action_dims)

    def spec(self):
        return {"obs_dims": self.obs_dims, "action_dims": self.action_dims, "discrete": self.discrete,
                "hidden_activation": self.hidden_activation, "noise_sigma": self.noise_sigma,
                "updates": self.updates}

    @classmethod
    def from_spec(cls, spec, hp, seed=0):
        learner = cls(spec["obs_dims"], spec["action_dims"], hp, seed, spec["discrete"], spec["hidden_activation"])
        learner.noise_sigma = spec["noise_sigma"]
        learner.updates = spec["updates"]
        return learner

    def optimizers(self):
        opts = {}
        for i, ag in enumerate(self.agents):
            opts[f"agent{i}.actor"] = ag.actor_opt
            opts[f"agent{i}.critic"] = ag.critic_opt
        return opts

    def networks(self):
        nets = {}
        for i, ag in enumerate(self.agents):
            for name in ("actor", "critic", "actor_target", "critic_target"):
                nets[f"agent{i}.{name}"] = getattr(ag, name)
        return nets

    def act(self, joint_obs, explore=True):
        if len(joint_obs) != self.n_agents:
            raise ShapeError(f"expected {self.n_agents} observations, got {len(joint_obs)}")
        sigma = self.noise_sigma if explore else 0.0
        return [self.head.explore(ag.actor(np.asarray(o, dtype=np.float64)), sigma, self.rng)
                for ag, o in zip(self.agents, joint_obs)]

    def stored_action(self, action, agent=0):
        if self.discrete:
            return one_hot(action, self.action_dims[agent])
        return np.asarray(action, dtype=np.float64)

    def update(self, batch):
        """Update every agent in index order on the same joint batch."""
        b = as_joint_batch(batch)
        return [maddpg_update(self, i, b) for i in range(self.n_agents)]


def maddpg_update(learner, agent_index, joint_batch):
    """Critic and actor step for one agent, then its soft target updates.

    Returns ``(critic_loss, actor_objective)``.
    """
    b = as_joint_batch(joint_batch)
    n = learner.n_agents
    if b.n_agents != n:
        raise ShapeError(f"batch has {b.n_agents} agents, learner has {n}")
    if not 0 <= agent_index < n:
        raise IndexError(f"agent_index {agent_index} out of range")
    acts = [a.reshape(len(a), -1) for a in b.actions]
    for k in range(n):
        if b.obs[k].shape[1] != learner.obs_dims[k] or acts[k].shape[1] != learner.action_dims[k]:
            raise ShapeError(f"agent {k}: batch does not match the learner's sizes")
    hp = learner.hp
    ag = learner.agents[agent_index]
    head = learner.head

    next_acts = [head(learner.agents[k].actor_target(b.next_obs[k])) for k in range(n)]
    q2 = ag.critic_target(np.concatenate(b.next_obs + next_acts, axis=1))[:, 0]
    y = b.rewards[:, agent_index] + hp.gamma * (1.0 - b.dones) * q2
    critic_loss = critic_regression(ag.critic, ag.critic_opt,
                                    np.concatenate(b.obs + acts, axis=1), y, hp.max_grad_norm)

    # splice the relaxed own action into the batch's joint action
    slot = sum(learner.obs_dims) + sum(learner.action_dims[:agent_index])
    prefix = np.concatenate(b.obs + acts[:agent_index], axis=1)
    suffix = np.concatenate([np.zeros((len(b), 0))] + acts[agent_index + 1:], axis=1)
    q_and_grad = critic_q_and_grad(ag.critic, prefix, suffix, slot)
    objective = actor_ascent(ag.actor, ag.actor_opt, head, b.obs[agent_index], q_and_grad,
                             hp.action_reg, hp.max_grad_norm)
    soft_update(ag.actor_target, ag.actor, hp.tau)
    soft_update(ag.critic_target, ag.critic, hp.tau)
    learner.updates += 1
    return critic_loss, objective
