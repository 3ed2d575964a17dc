"""Proximal policy optimisation with generalised advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..nn import Hyperparams, OptimizerState, mlp_init
from .common import apply_gradients, check_loss, sample_categorical


def gae_advantages(rewards, values, dones, gamma, lam):
    """GAE over the leading (time) axis.

    ``values`` carries one extra bootstrap entry at the end. A ``done`` at t
    stops both bootstrapping from V[t+1] and the recursion across t -> t+1.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if d.shape != r.shape or v.shape != (r.shape[0] + 1,) + r.shape[1:]:
        raise ShapeError("need rewards and dones of equal shape and one extra value entry")
    adv = np.zeros_like(r)
    running = np.zeros(r.shape[1:])
    for t in range(r.shape[0] - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * live * v[t + 1] - v[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv


def clipped_surrogate(ratio, advantages, clip_ratio):
    """Mean clipped objective and its gradient with respect to each ratio.

    A sample whose ratio has left the trust interval in the direction its
    advantage favours contributes zero gradient.
    """
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    objective = float(np.mean(np.minimum(unclipped, clipped)))
    grad = np.where(unclipped <= clipped, adv, 0.0) / ratio.size
    return objective, grad


def normalize(x):
    std = x.std()
    return (x - x.mean()) / std if std > 1e-8 else x - x.mean()


@dataclass
class Rollout:
    """On-policy samples laid out (time, env)."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray  # (T + 1, n_envs), last row is the bootstrap

    def __post_init__(self):
        T = self.rewards.shape[0]
        shape = self.rewards.shape
        if (self.actions.shape != shape or self.log_probs.shape != shape or self.dones.shape != shape
                or self.obs.shape[:2] != shape or self.values.shape != (T + 1,) + shape[1:]):
            raise ShapeError("rollout arrays are not aligned")

    @property
    def n_steps(self):
        return int(self.rewards.size)


class PpoLearner:
    algorithm = "ppo"

    def __init__(self, obs_dim, n_actions, hp=None, seed=0, horizon=128, hidden_activation="tanh"):
        self.hp = hp or Hyperparams()
        self.obs_dim, self.n_actions = int(obs_dim), int(n_actions)
        self.horizon = int(horizon)
        self.hidden_activation = hidden_activation
        self.rng = np.random.default_rng(seed)
        h = self.hp.hidden_sizes
        self.policy = mlp_init([self.obs_dim, *h, self.n_actions], (hidden_activation, "softmax"), self.rng)
        self.value = mlp_init([self.obs_dim, *h, 1], (hidden_activation, "identity"), self.rng)
        self.policy_opt = OptimizerState.for_net(self.policy, "adam", self.hp.learning_rate)
        self.value_opt = OptimizerState.for_net(self.value, "adam", self.hp.learning_rate)
        self.updates = 0

    def spec(self):
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions, "horizon": self.horizon,
                "hidden_activation": self.hidden_activation, "updates": self.updates}

    @classmethod
    def from_spec(cls, spec, hp, seed=0):
        learner = cls(spec["obs_dim"], spec["n_actions"], hp, seed, spec["horizon"], spec["hidden_activation"])
        learner.updates = spec["updates"]
        return learner

    def optimizers(self):
        return {"policy": self.policy_opt, "value": self.value_opt}

    def networks(self):
        return {"policy": self.policy, "value": self.value}

    def act(self, obs, explore=True):
        p = self.policy(np.asarray(obs, dtype=np.float64))
        if not explore:
            return int(np.argmax(p))
        return int(sample_categorical(p, self.rng)[0])

    def act_batch(self, obs):
        """Sampled actions, their log-probabilities and state values for a batch."""
        p = self.policy(obs)
        a = sample_categorical(p, self.rng)
        logp = np.log(np.maximum(p[np.arange(len(a)), a], 1e-12))
        return a, logp, self.value(obs)[:, 0]

    def update(self, rollout):
        return ppo_update(self, rollout)


def ppo_update(learner, rollout):
    """Several epochs of minibatch steps on one rollout.

    Returns the mean ``(policy_loss, value_loss, entropy)`` over minibatches.
    """
    hp = learner.hp
    if rollout.obs.shape[-1] != learner.obs_dim:
        raise ShapeError("rollout observations do not match the learner")
    adv = gae_advantages(rollout.rewards, rollout.values, rollout.dones, hp.gamma, hp.gae_lambda)
    returns = (adv + rollout.values[:-1]).ravel()
    adv = normalize(adv.ravel())
    obs = rollout.obs.reshape(-1, learner.obs_dim)
    actions = rollout.actions.ravel().astype(int)
    if np.any(actions < 0) or np.any(actions >= learner.n_actions):
        raise ShapeError("rollout holds actions outside the learner's action range")
    old_logp = rollout.log_probs.ravel()
    n = len(actions)
    stats = []
    for _ in range(hp.epochs):
        order = learner.rng.permutation(n)
        for start in range(0, n, hp.minibatch_size):
            idx = order[start:start + hp.minibatch_size]
            stats.append(_minibatch_step(learner, obs[idx], actions[idx], old_logp[idx],
                                         adv[idx], returns[idx]))
    learner.updates += 1
    return tuple(float(x) for x in np.mean(stats, axis=0))


def _minibatch_step(learner, obs, actions, old_logp, adv, returns):
    hp = learner.hp
    m = len(actions)
    rows = np.arange(m)
    p, cache = learner.policy.forward_cached(obs)
    p_safe = np.maximum(p, 1e-12)
    logp = np.log(p_safe)
    ratio = np.exp(logp[rows, actions] - old_logp)
    objective, d_ratio = clipped_surrogate(ratio, adv, hp.clip_ratio)
    entropy = -np.sum(p * logp, axis=1)
    policy_loss = check_loss(-objective, "PPO policy loss")
    # dL/dp for L = -surrogate - c * mean entropy
    g = np.zeros_like(p)
    g[rows, actions] = -d_ratio * ratio / p_safe[rows, actions]
    if hp.entropy_coef > 0:
        g += hp.entropy_coef * (logp + 1.0) / m
    grads, _ = learner.policy.backward_cached(cache, g)
    apply_gradients(learner.policy, grads, learner.policy_opt, hp.max_grad_norm)

    v, vcache = learner.value.forward_cached(obs)
    err = v[:, 0] - returns
    value_loss = check_loss(np.mean(err ** 2), "PPO value loss")
    vgrads, _ = learner.value.backward_cached(vcache, (hp.value_coef * 2.0 * err / m)[:, None])
    apply_gradients(learner.value, vgrads, learner.value_opt, hp.max_grad_norm)
    return policy_loss, value_loss, float(np.mean(entropy))


class RolloutRunner:
    """Steps several single-agent environments in lockstep, resetting on episode end.

    Episode ``k`` (counted across all envs in start order) is reset with seed
    ``seed + k``; finished episodes are appended to ``episodes`` as dicts.
    """

    def __init__(self, envs, seed=0):
        self.envs = list(envs)
        self.next_seed = int(seed)
        self.episodes = []
        self.obs = np.stack([self._reset(e) for e in self.envs])
        self.returns = np.zeros(len(self.envs))
        self.lengths = np.zeros(len(self.envs), dtype=int)
        self.team_returns = [{} for _ in self.envs]
        self.total_steps = 0

    def _reset(self, env):
        s = self.next_seed
        self.next_seed += 1
        return np.asarray(env.reset(s)[0], dtype=np.float64)

    def collect(self, learner, horizon):
        K, D = len(self.envs), self.obs.shape[1]
        obs = np.zeros((horizon, K, D))
        acts = np.zeros((horizon, K), dtype=int)
        logps = np.zeros((horizon, K))
        rews = np.zeros((horizon, K))
        dones = np.zeros((horizon, K), dtype=bool)
        vals = np.zeros((horizon + 1, K))
        for t in range(horizon):
            a, logp, v = learner.act_batch(self.obs)
            obs[t], acts[t], logps[t], vals[t] = self.obs, a, logp, v
            for k, env in enumerate(self.envs):
                res = env.step([int(a[k])])
                rews[t, k] = res.rewards[0]
                dones[t, k] = res.episode_done
                self.returns[k] += res.rewards[0]
                self.lengths[k] += 1
                for team, r in res.info.get("team_rewards", {}).items():
                    self.team_returns[k][team] = self.team_returns[k].get(team, 0.0) + r
                if res.episode_done:
                    self.episodes.append({"return": float(self.returns[k]), "length": int(self.lengths[k]),
                                          "team_returns": self.team_returns[k], "info": res.info})
                    self.returns[k] = 0.0
                    self.lengths[k] = 0
                    self.team_returns[k] = {}
                    self.obs[k] = self._reset(env)
                else:
                    self.obs[k] = res.observations[0]
            self.total_steps += K
        vals[horizon] = learner.value(self.obs)[:, 0]
        return Rollout(obs, acts, logps, rews, dones, vals)
