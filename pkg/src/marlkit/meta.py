"""Population self-play and observation corruption.

A :class:`Population` holds learners with their hyperparameters and fitness.
:func:`run_tournament` plays every pair round-robin, :func:`evolve_population`
replaces the weakest members by perturbed clones of the strongest, and
:func:`corrupt_observation` injects sensor noise and failures.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .envs.base import MultiAgentEnv, StepResult
from .nn import PERTURBABLE, Hyperparams, OptimizerState

EXPLOIT_FRACTION = 0.2
PERTURB_FACTORS = (0.8, 1.25)


# -- observation corruption --------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    gaussian_sigma: float = 0.0
    dropout_prob: float = 0.0
    failed_channels: frozenset = frozenset()

    def __post_init__(self):
        if not self.gaussian_sigma >= 0:
            raise ValueError("gaussian_sigma must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        object.__setattr__(self, "failed_channels", frozenset(int(c) for c in self.failed_channels))
        if any(c < 0 for c in self.failed_channels):
            raise ValueError("failed channel indices must be non-negative")

    @property
    def is_identity(self):
        return self.gaussian_sigma == 0 and self.dropout_prob == 0 and not self.failed_channels


def corrupt_observation(obs, config, rng):
    """Gaussian noise, then independent dropout, then zeroed failed channels.

    Random numbers are drawn only for the active stages, so an all-zero
    config returns an unchanged copy and leaves ``rng`` untouched. Failed
    channel indices beyond the vector length are ignored.
    """
    x = np.array(obs, dtype=np.float64)
    if config.gaussian_sigma > 0:
        x = x + config.gaussian_sigma * rng.standard_normal(x.shape)
    if config.dropout_prob > 0:
        x[rng.random(x.shape) < config.dropout_prob] = 0.0
    if config.failed_channels:
        idx = [c for c in config.failed_channels if c < x.shape[-1]]
        x[..., idx] = 0.0
    return x


class NoisyObservationEnv(MultiAgentEnv):
    """Corrupts the observations of ``agents`` (default: all) before they reach the learner.

    The noise stream is reseeded from the episode seed, so runs stay
    reproducible.
    """

    def __init__(self, env, config, agents=None, salt=0x5EED):
        super().__init__()
        self.env = env
        self.config = config
        self.agents = set(range(env.n_agents) if agents is None else agents)
        self.salt = salt
        self.n_agents = env.n_agents
        self.observation_spaces = env.observation_spaces
        self.action_spaces = env.action_spaces
        self.teams = env.teams
        self.noop_action = env.noop_action
        self.obs_dim = getattr(env, "obs_dim", None)
        self.rng = np.random.default_rng(salt)

    def __getattr__(self, name):
        # delegate env-specific helpers (alive, state, layout, ...) to the wrapped env
        if name == "env":
            raise AttributeError(name)
        return getattr(self.env, name)

    def _corrupt(self, obs):
        return [corrupt_observation(o, self.config, self.rng) if i in self.agents else o
                for i, o in enumerate(obs)]

    def _reset(self, seed):
        self.rng = np.random.default_rng([int(seed), self.salt])
        return self._corrupt(self.env.reset(seed))

    def _step(self, actions):
        res = self.env.step(actions)
        return StepResult(self._corrupt(res.observations), res.rewards, res.agent_done,
                          res.episode_done, res.info)


# -- population --------------------------------------------------------------------------

@dataclass
class Member:
    policy: object
    hyperparams: Hyperparams
    fitness: float | None = None
    lineage_id: int = 0
    parent_id: int | None = None
    version: int = 0


@dataclass
class Population:
    members: list
    generation: int = 0
    next_lineage_id: int = field(default=0)

    def __post_init__(self):
        if not self.members:
            raise ValueError("a population needs at least one member")
        self.next_lineage_id = max(self.next_lineage_id, max(m.lineage_id for m in self.members) + 1)

    @property
    def size(self):
        return len(self.members)

    @classmethod
    def from_learners(cls, learners):
        return cls([Member(l, l.hp, lineage_id=k) for k, l in enumerate(learners)])


@dataclass
class FitnessTable:
    """Round-robin results; ``pairs[(i, j)] = (wins_i, losses_i, draws)`` for i < j."""

    pairs: dict
    fitness: np.ndarray
    episodes_per_pair: int

    def rows(self):
        for (i, j), (w, l, d) in sorted(self.pairs.items()):
            yield {"member_a": i, "member_b": j, "wins_a": w, "losses_a": l, "draws": d}


def derived_seed(*parts):
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def play_match(env, policies, seed):
    """One greedy episode of team ``a`` (env.teams order, first team) vs team ``b``.

    ``policies`` maps team name to a policy with ``act(joint_obs, explore)``.
    Returns the winning team name or ``None`` for a draw.
    """
    obs = env.reset(seed)
    while True:
        actions = [None] * env.n_agents
        for team, policy in policies.items():
            members = env.teams[team]
            acts = policy.act([obs[i] for i in members], explore=False)
            for i, a in zip(members, acts):
                actions[i] = a if env.alive[i] else env.noop_action
        res = env.step(actions)
        obs = res.observations
        if res.episode_done:
            return res.info.get("winner")


def run_tournament(population, env_factory, episodes_per_pair, seed):
    """Round robin between all members; sides swap every episode.

    Fitness is wins + 0.5 * draws, summed over every pairing.
    """
    n = population.size
    if n < 2:
        raise ValueError("a tournament needs at least two members")
    if episodes_per_pair < 1:
        raise ValueError("episodes_per_pair must be positive")
    env = env_factory()
    team_a, team_b = list(env.teams)[:2]
    pairs = {}
    fitness = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            w = l = d = 0
            for e in range(episodes_per_pair):
                first, second = (i, j) if e % 2 == 0 else (j, i)
                winner = play_match(env, {team_a: population.members[first].policy,
                                          team_b: population.members[second].policy},
                                    derived_seed(seed, i, j, e))
                if winner is None:
                    d += 1
                elif (winner == team_a) == (first == i):
                    w += 1
                else:
                    l += 1
            pairs[(i, j)] = (w, l, d)
            fitness[i] += w + 0.5 * d
            fitness[j] += l + 0.5 * d
    for m, f in zip(population.members, fitness):
        m.fitness = float(f)
    return FitnessTable(pairs, fitness, episodes_per_pair)


def apply_hyperparams(learner, hp):
    """Point a learner (and its optimisers) at new hyperparameters."""
    learner.hp = hp
    if hasattr(learner, "noise_sigma"):
        learner.noise_sigma = hp.noise_sigma
    if hasattr(learner, "head"):
        learner.head.temperature = hp.temperature
    stack = [learner]
    seen = set()
    while stack:
        obj = stack.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        for value in vars(obj).values():
            if isinstance(value, OptimizerState):
                value.learning_rate = hp.learning_rate
            elif isinstance(value, list):
                stack.extend(v for v in value if hasattr(v, "__dict__") and not isinstance(v, np.ndarray))
    return learner


def perturb_hyperparams(hp, rng):
    """Scale each perturbable field by 0.8 or 1.25 (independently), kept within range."""
    changes = {}
    for name in PERTURBABLE:
        value = getattr(hp, name) * PERTURB_FACTORS[int(rng.integers(2))]
        if name in Hyperparams._UNIT:
            value = min(value, 1.0)
        changes[name] = value
    return hp.replace(**changes)


def evolve_population(population, table, rng):
    """Truncation selection: the bottom 20% become perturbed clones of random top-20% members.

    Ranking is by fitness, ties broken by member index (lower index ranks
    higher). Surviving members are carried over untouched.
    """
    n = population.size
    if n < 5:
        raise ValueError("evolve_population needs at least 5 members")
    fitness = np.asarray(table.fitness if isinstance(table, FitnessTable) else table, dtype=np.float64)
    if fitness.shape != (n,) or not np.all(np.isfinite(fitness)):
        raise ValueError("need one finite fitness value per member")
    k = int(np.floor(EXPLOIT_FRACTION * n))
    order = sorted(range(n), key=lambda i: (-fitness[i], i))
    top, bottom = order[:k], order[n - k:]
    members = list(population.members)
    next_id = population.next_lineage_id
    for slot in sorted(bottom):
        parent = population.members[top[int(rng.integers(k))]]
        hp = perturb_hyperparams(parent.hyperparams, rng)
        policy = apply_hyperparams(copy.deepcopy(parent.policy), hp)
        members[slot] = Member(policy, hp, None, next_id, parent.lineage_id, parent.version + 1)
        next_id += 1
    return Population(members, population.generation + 1, next_id)
