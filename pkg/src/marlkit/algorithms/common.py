"""Helpers shared by the learners: batching, action relaxation, exploration."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError, ShapeError
from ..nn import clip_grad_norm, optimizer_step, softmax
from ..replay import JointBatch, Transition


def as_joint_batch(batch):
    """Accept a :class:`JointBatch` or a list of :class:`Transition` and return a JointBatch."""
    if isinstance(batch, JointBatch):
        return batch
    batch = list(batch)
    if not batch or not isinstance(batch[0], Transition):
        raise ShapeError("expected a JointBatch or a non-empty list of Transitions")
    n = len(batch[0].joint_obs)
    if any(len(t.joint_obs) != n for t in batch):
        raise ShapeError("transitions disagree on the number of agents")
    return JointBatch(
        [np.array([t.joint_obs[i] for t in batch], dtype=np.float64) for i in range(n)],
        [np.array([t.joint_actions[i] for t in batch], dtype=np.float64) for i in range(n)],
        np.array([t.joint_rewards for t in batch], dtype=np.float64),
        [np.array([t.joint_next_obs[i] for t in batch], dtype=np.float64) for i in range(n)],
        np.array([t.done for t in batch], dtype=bool),
    )


def one_hot(index, n):
    v = np.zeros(n)
    v[int(index)] = 1.0
    return v


def relaxed(logits, temperature):
    """Temperature-relaxed one-hot action: softmax(logits / T)."""
    return softmax(np.asarray(logits) / temperature)


def relaxed_backward(probs, upstream, temperature):
    """Vector-Jacobian product of :func:`relaxed` with respect to the logits."""
    return probs * (upstream - np.sum(upstream * probs, axis=-1, keepdims=True)) / temperature


def epsilon_greedy(q_values, epsilon, rng):
    """Greedy action (lowest index on ties) with probability 1-epsilon, else uniform."""
    q = np.asarray(q_values, dtype=np.float64).ravel()
    if q.size == 0:
        raise ShapeError("epsilon_greedy needs at least one action value")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def check_loss(value, what):
    if not np.isfinite(value):
        raise NonFiniteError(f"{what} became non-finite")
    return float(value)


def apply_gradients(net, grads, state, max_norm):
    optimizer_step(net, clip_grad_norm(grads, max_norm), state)


def sample_categorical(probs, rng):
    """One draw per row of ``probs`` by inverse CDF (one uniform per row)."""
    probs = np.atleast_2d(probs)
    u = rng.random((probs.shape[0], 1))
    idx = (np.cumsum(probs, axis=1) < u).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)
