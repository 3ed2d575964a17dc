"""Small dense networks in plain numpy.

Every function approximator in the package (policies, critics, value heads)
is an :class:`Mlp`. Forward and backward passes accept a single vector or a
batch of row vectors; gradients are summed over the batch, so callers scale
the upstream gradient to get a mean loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh", "softmax")


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass
class Mlp:
    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("number of weight/bias arrays does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != expected or b.shape != (expected[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape}, expected {expected}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1]

    @property
    def architecture(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    def parameters(self):
        """Parameter arrays in declared layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def same_architecture(self, other):
        return self.architecture == other.architecture

    def __call__(self, x):
        return mlp_forward(self, x)

    # cached passes used by the learners; the public functions below wrap them
    def forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.n_inputs:
            raise ShapeError(f"input has shape {x.shape}, network expects {self.n_inputs} features")
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            if k < last:
                h = np.tanh(z) if self.hidden_activation == "tanh" else np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                h = np.tanh(z)
            elif self.output_activation == "softmax":
                h = softmax(z)
            else:
                h = z
            acts.append(h)
        out = acts[-1][0] if single else acts[-1]
        return out, (acts, single)

    def backward_cached(self, cache, upstream):
        acts, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient has shape {np.shape(upstream)}, output is {acts[-1].shape}")
        n_layers = len(self.weights)
        dws = [None] * n_layers
        dbs = [None] * n_layers
        for k in range(n_layers - 1, -1, -1):
            a = acts[k + 1]
            if k == n_layers - 1:
                if self.output_activation == "tanh":
                    g = g * (1.0 - a * a)
                elif self.output_activation == "softmax":
                    g = a * (g - np.sum(g * a, axis=1, keepdims=True))
            elif self.hidden_activation == "tanh":
                g = g * (1.0 - a * a)
            else:
                g = g * (a > 0.0)
            dws[k] = g.T @ acts[k]
            dbs[k] = g.sum(axis=0)
            g = g @ self.weights[k]
        input_grad = g[0] if single else g
        return Gradients(dws, dbs), input_grad


@dataclass
class Gradients:
    weights: list
    biases: list

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def __add__(self, other):
        return Gradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scale(self, factor):
        return Gradients([w * factor for w in self.weights], [b * factor for b in self.biases])

    def global_norm(self):
        return float(np.sqrt(sum(float(np.sum(p * p)) for p in self.parameters())))

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    @classmethod
    def zeros_like(cls, net):
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])


def clip_grad_norm(grads, max_norm):
    """Rescale ``grads`` so their global L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return grads
    norm = grads.global_norm()
    if norm > max_norm:
        return grads.scale(max_norm / (norm + 1e-12))
    return grads


def mlp_init(layer_sizes, activations=("tanh", "identity"), seed=0):
    """Glorot-uniform weights, zero biases.

    ``seed`` may be an int or a ``numpy.random.Generator``; in the latter case
    the generator is advanced.
    """
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ValueError("an Mlp needs at least an input and an output layer size")
    if any(int(s) != s or s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive integers, got {sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    hidden, output = activations
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, hidden, output)


def mlp_forward(net, x):
    return net.forward_cached(x)[0]


def mlp_backward(net, x, upstream_grad):
    """Reverse-mode derivatives of ``net`` at ``x``.

    Returns ``(Gradients, input_grad)`` where both are the vector-Jacobian
    product with ``upstream_grad`` (summed over the batch for parameters).
    """
    _, cache = net.forward_cached(x)
    return net.backward_cached(cache, upstream_grad)


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def for_net(cls, net, kind="adam", learning_rate=1e-3, **kw):
        state = cls(kind=kind, learning_rate=learning_rate, **kw)
        if kind == "adam":
            state.m = [np.zeros_like(p) for p in net.parameters()]
            state.v = [np.zeros_like(p) for p in net.parameters()]
        return state


def optimizer_step(net, grads, state):
    """Apply one descent step in place and return ``(net, state)``.

    A non-finite gradient raises :class:`NonFiniteError` before any parameter
    is touched.
    """
    params = net.parameters()
    gs = grads.parameters()
    if len(gs) != len(params) or any(g.shape != p.shape for g, p in zip(gs, params)):
        raise ShapeError("gradients are not shape-congruent with the network")
    if not grads.is_finite():
        raise NonFiniteError("non-finite gradient; parameters left unchanged")
    state.step_count += 1
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(params, gs):
            p -= lr * g
        return net, state
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ShapeError("optimizer moments are not shape-congruent with the network")
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon_stab)
    return net, state


def soft_update(target, source, tau):
    """Move ``target`` toward ``source``: p <- tau*source + (1-tau)*target (in place)."""
    if not target.same_architecture(source):
        raise ShapeError("soft_update needs identical architectures")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for pt, ps in zip(target.parameters(), source.parameters()):
        if tau == 1.0:
            pt[...] = ps
        elif tau != 0.0:
            pt[...] = tau * ps + (1.0 - tau) * pt
    return target


# fields perturbed by population evolution (all strictly positive, scale-like)
PERTURBABLE = ("learning_rate", "tau", "noise_sigma", "entropy_coef", "epsilon_explore")


@dataclass
class Hyperparams:
    """Learner constants shared by every algorithm; each reads what it needs."""

    gamma: float = 0.95
    tau: float = 0.01
    epsilon_explore: float = 0.1
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    batch_size: int = 64
    buffer_capacity: int = 100_000
    noise_sigma: float = 0.1
    learning_rate: float = 1e-3
    hidden_sizes: tuple = (64, 64)
    temperature: float = 1.0
    max_grad_norm: float | None = 0.5
    action_reg: float = 1e-3
    epochs: int = 4
    minibatch_size: int = 64
    update_every: int = 1

    _UNIT = ("gamma", "tau", "epsilon_explore", "gae_lambda")
    _NONNEG = ("entropy_coef", "value_coef", "noise_sigma", "action_reg")
    _POSITIVE = ("clip_ratio", "learning_rate", "temperature")
    _COUNTS = ("batch_size", "buffer_capacity", "epochs", "minibatch_size", "update_every")

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        for k in self._UNIT:
            if not 0.0 <= getattr(self, k) <= 1.0:
                raise ConfigError(k, f"must lie in [0, 1], got {getattr(self, k)}")
        for k in self._NONNEG:
            if not getattr(self, k) >= 0.0:
                raise ConfigError(k, f"must be non-negative, got {getattr(self, k)}")
        for k in self._POSITIVE:
            if not getattr(self, k) > 0.0:
                raise ConfigError(k, f"must be positive, got {getattr(self, k)}")
        for k in self._COUNTS:
            v = getattr(self, k)
            if int(v) != v or v < 1:
                raise ConfigError(k, f"must be a positive integer, got {v}")
            setattr(self, k, int(v))
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes", "every hidden layer needs at least one unit")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ConfigError("max_grad_norm", "must be positive or null")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return Hyperparams(**d)
