"""Dataset aggregation: imitate an expert on the states the learner visits."""

from __future__ import annotations

import numpy as np

from ..errors import ExpertError, ShapeError
from ..nn import Hyperparams, OptimizerState, mlp_init
from .common import apply_gradients, check_loss


class DaggerLearner:
    """Softmax classifier trained on an ever-growing (observation, expert action) set.

    ``beta`` is the probability of executing the expert's action during
    rollouts; it starts at ``beta0`` and is multiplied by ``beta_decay`` after
    every iteration.
    """

    algorithm = "dagger"

    def __init__(self, obs_dim, n_actions, hp=None, seed=0, beta0=1.0, beta_decay=0.5,
                 train_epochs=30, hidden_activation="tanh"):
        self.hp = hp or Hyperparams()
        self.obs_dim, self.n_actions = int(obs_dim), int(n_actions)
        self.hidden_activation = hidden_activation
        self.rng = np.random.default_rng(seed)
        self.policy = mlp_init([self.obs_dim, *self.hp.hidden_sizes, self.n_actions],
                               (hidden_activation, "softmax"), self.rng)
        self.opt = OptimizerState.for_net(self.policy, "adam", self.hp.learning_rate)
        self.beta = float(beta0)
        self.beta_decay = float(beta_decay)
        self.train_epochs = int(train_epochs)
        self.data_obs = []
        self.data_actions = []
        self.iteration = 0
        self.episodes_run = 0

    def spec(self):
        return {"obs_dim": self.obs_dim, "n_actions": self.n_actions, "beta": self.beta,
                "beta_decay": self.beta_decay, "train_epochs": self.train_epochs,
                "hidden_activation": self.hidden_activation, "iteration": self.iteration,
                "episodes_run": self.episodes_run}

    @classmethod
    def from_spec(cls, spec, hp, seed=0):
        learner = cls(spec["obs_dim"], spec["n_actions"], hp, seed, spec["beta"], spec["beta_decay"],
                      spec["train_epochs"], spec["hidden_activation"])
        learner.iteration = spec["iteration"]
        learner.episodes_run = spec["episodes_run"]
        return learner

    def optimizers(self):
        return {"policy": self.opt}

    def networks(self):
        return {"policy": self.policy}

    @property
    def dataset_size(self):
        return len(self.data_actions)

    def act(self, obs, explore=False):
        return int(np.argmax(self.policy(np.asarray(obs, dtype=np.float64))))

    def agreement(self, observations, expert_actions):
        pred = np.argmax(self.policy(np.asarray(observations, dtype=np.float64)), axis=1)
        return float(np.mean(pred == np.asarray(expert_actions)))

    def fit(self, epochs=None):
        """Minibatch cross-entropy on the full aggregated dataset; returns the final epoch's mean loss."""
        X = np.asarray(self.data_obs, dtype=np.float64)
        y = np.asarray(self.data_actions, dtype=int)
        if X.ndim != 2 or X.shape[1] != self.obs_dim:
            raise ShapeError("dataset observations do not match the policy input")
        bs = self.hp.batch_size
        loss = 0.0
        for _ in range(self.train_epochs if epochs is None else epochs):
            order = self.rng.permutation(len(y))
            losses = []
            for start in range(0, len(y), bs):
                idx = order[start:start + bs]
                p, cache = self.policy.forward_cached(X[idx])
                rows = np.arange(len(idx))
                pa = np.maximum(p[rows, y[idx]], 1e-12)
                losses.append(check_loss(-np.mean(np.log(pa)), "imitation loss"))
                g = np.zeros_like(p)
                g[rows, y[idx]] = -1.0 / (pa * len(idx))
                grads, _ = self.policy.backward_cached(cache, g)
                apply_gradients(self.policy, grads, self.opt, self.hp.max_grad_norm)
            loss = float(np.mean(losses))
        return loss


def dagger_iterate(learner, env, expert, episodes, seed=None):
    """One aggregation round.

    Rolls out ``episodes`` episodes of the beta-mixture policy, labels every
    visited state with ``expert(env)``, retrains on the whole dataset and
    decays beta. Episode seeds default to a running counter offset by ``seed``.
    """
    base = 0 if seed is None else int(seed)
    beta = learner.beta
    new = 0
    log = []
    for _ in range(episodes):
        obs = env.reset(base + learner.episodes_run)
        learner.episodes_run += 1
        done = False
        ret, length = 0.0, 0
        team_returns = {}
        while not done:
            try:
                label = int(expert(env))
            except Exception as exc:
                raise ExpertError(f"expert failed on a visited state: {exc}") from exc
            o = np.asarray(obs[0], dtype=np.float64)
            learner.data_obs.append(o)
            learner.data_actions.append(label)
            new += 1
            action = label if learner.rng.random() < beta else learner.act(o)
            res = env.step([action])
            obs, done = res.observations, res.episode_done
            ret += float(res.rewards[0])
            length += 1
            for team, r in res.info.get("team_rewards", {}).items():
                team_returns[team] = team_returns.get(team, 0.0) + r
        log.append({"return": ret, "length": length, "team_returns": team_returns, "info": res.info})
    loss = learner.fit()
    learner.iteration += 1
    learner.beta *= learner.beta_decay
    return {"iteration": learner.iteration, "beta": beta, "new_samples": new,
            "dataset_size": learner.dataset_size, "train_loss": loss, "episodes": log}
