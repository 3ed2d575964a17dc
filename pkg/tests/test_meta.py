import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlkit.algorithms import MaddpgLearner
from marlkit.envs.room_clear import CombatAction, RoomClearEnv, arena_layout
from marlkit.meta import (Member, NoiseConfig, Population, corrupt_observation, evolve_population,
                          perturb_hyperparams, run_tournament)
from marlkit.nn import PERTURBABLE, Hyperparams

A = CombatAction
VIEW = 7 * 7


class Idle:
    def act(self, joint_obs, explore=True):
        return [int(A.NOOP)] * len(joint_obs)


class Charger:
    """Advance away from the home edge; fire once an enemy shows in the local window."""

    def __init__(self):
        self.heading = {}

    def act(self, joint_obs, explore=True):
        out = []
        for k, o in enumerate(joint_obs):
            row = o[4 * VIEW + 1]
            if row <= 0.15 or row >= 0.85:
                self.heading[k] = int(A.MOVE_SOUTH if row < 0.5 else A.MOVE_NORTH)
            out.append(int(A.ATTACK) if o[3 * VIEW:4 * VIEW].any() else self.heading[k])
        return out


def arena():
    return RoomClearEnv(arena_layout(), n_red=2, n_blue=2)


def population(policies):
    return Population([Member(p, Hyperparams(), lineage_id=k) for k, p in enumerate(policies)])


# -- tournament --------------------------------------------------------------------------------

def test_pair_accounting():
    table = run_tournament(population([Charger(), Idle()]), arena, 10, seed=0)
    w, l, d = table.pairs[(0, 1)]
    assert w + l + d == 10
    assert table.fitness.sum() == pytest.approx(10)
    assert w > l  # an idle team cannot win


def test_fitness_is_conserved_across_round_robin():
    pop = population([Charger(), Idle(), Charger(), Idle()])
    table = run_tournament(pop, arena, 4, seed=1)
    assert len(table.pairs) == 6
    assert all(sum(r) == 4 for r in table.pairs.values())
    assert table.fitness.sum() == pytest.approx(6 * 4)
    assert [m.fitness for m in pop.members] == table.fitness.tolist()


def test_identical_idle_policies_draw():
    table = run_tournament(population([Idle(), Idle()]), arena, 2, seed=0)
    assert table.pairs[(0, 1)] == (0, 0, 2)
    assert table.fitness.tolist() == [1.0, 1.0]


def test_tournament_is_deterministic():
    learners = [MaddpgLearner([199, 199], [6, 6], Hyperparams(hidden_sizes=(8,)), seed=s) for s in range(3)]
    a = run_tournament(Population.from_learners(learners), arena, 2, seed=5)
    b = run_tournament(Population.from_learners(learners), arena, 2, seed=5)
    assert a.pairs == b.pairs and np.array_equal(a.fitness, b.fitness)


def test_tournament_needs_two_members():
    with pytest.raises(ValueError):
        run_tournament(population([Idle()]), arena, 2, seed=0)


# -- evolution ---------------------------------------------------------------------------------

def learner_population(n):
    hp = Hyperparams(hidden_sizes=(4,), learning_rate=1e-3)
    return Population.from_learners([MaddpgLearner([3], [2], hp, seed=s) for s in range(n)])


def snapshot(member):
    return b"".join(p.tobytes() for net in member.policy.networks().values() for p in net.parameters())


def test_size_ten_replaces_exactly_two():
    pop = learner_population(10)
    before = [snapshot(m) for m in pop.members]
    fitness = np.arange(10, dtype=float)[::-1]  # member 0 best
    new = evolve_population(pop, fitness, np.random.default_rng(0))
    assert new.size == 10 and new.generation == 1
    replaced = [k for k in range(10) if new.members[k] is not pop.members[k]]
    assert replaced == [8, 9]
    for k in range(8):
        assert snapshot(new.members[k]) == before[k]
    for k in replaced:
        m = new.members[k]
        assert m.parent_id in (0, 1)
        assert m.lineage_id >= 10
        assert snapshot(m) == before[m.parent_id]


def test_equal_fitness_still_replaces_by_index():
    pop = learner_population(5)
    new = evolve_population(pop, np.zeros(5), np.random.default_rng(0))
    assert new.members[4] is not pop.members[4]
    assert new.members[4].parent_id == 0
    assert all(new.members[k] is pop.members[k] for k in range(4))


def test_perturbed_fields_scale_by_declared_factors():
    hp = Hyperparams(learning_rate=1e-3, tau=0.5, noise_sigma=0.2, entropy_coef=0.01, epsilon_explore=0.9)
    rng = np.random.default_rng(0)
    for _ in range(50):
        new = perturb_hyperparams(hp, rng)
        for name in PERTURBABLE:
            ratio = getattr(new, name) / getattr(hp, name)
            capped = getattr(new, name) == 1.0
            assert capped or ratio == pytest.approx(0.8) or ratio == pytest.approx(1.25)
        assert new.gamma == hp.gamma and new.batch_size == hp.batch_size


def test_clone_optimiser_follows_new_learning_rate():
    pop = learner_population(5)
    new = evolve_population(pop, np.arange(5.0), np.random.default_rng(3))
    child = new.members[0]
    assert child.hyperparams.learning_rate / 1e-3 in (pytest.approx(0.8), pytest.approx(1.25))
    assert child.policy.agents[0].actor_opt.learning_rate == child.hyperparams.learning_rate


def test_evolution_needs_five_members():
    with pytest.raises(ValueError):
        evolve_population(learner_population(4), np.zeros(4), np.random.default_rng(0))


def test_evolution_is_deterministic():
    pop = learner_population(6)
    a = evolve_population(pop, np.arange(6.0), np.random.default_rng(9))
    b = evolve_population(pop, np.arange(6.0), np.random.default_rng(9))
    assert [m.hyperparams for m in a.members] == [m.hyperparams for m in b.members]


# -- observation corruption ----------------------------------------------------------------------

def test_identity_config():
    x = np.random.default_rng(0).normal(size=20)
    rng = np.random.default_rng(1)
    state = rng.bit_generator.state
    assert np.array_equal(corrupt_observation(x, NoiseConfig(), rng), x)
    assert rng.bit_generator.state == state


def test_total_sensor_failure():
    x = np.ones(12)
    cfg = NoiseConfig(0.3, 0.2, frozenset(range(12)))
    assert np.array_equal(corrupt_observation(x, cfg, np.random.default_rng(0)), np.zeros(12))


def test_gaussian_sigma_statistics():
    draws = corrupt_observation(np.zeros((100_000, 4)), NoiseConfig(gaussian_sigma=0.1), np.random.default_rng(0))
    assert np.all(np.abs(draws.std(axis=0) - 0.1) < 0.005)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.002)


def test_dropout_rate():
    out = corrupt_observation(np.ones(100_000), NoiseConfig(dropout_prob=0.3), np.random.default_rng(0))
    assert abs(np.mean(out == 0) - 0.3) < 0.01


@given(st.integers(1, 50), st.floats(0, 2), st.floats(0, 1), st.sets(st.integers(0, 60)), st.integers(0, 999))
@settings(max_examples=100)
def test_corruption_preserves_length_and_kills_failed_channels(n, sigma, p, failed, seed):
    out = corrupt_observation(np.ones(n), NoiseConfig(sigma, p, frozenset(failed)), np.random.default_rng(seed))
    assert out.shape == (n,)
    assert all(out[c] == 0 for c in failed if c < n)


@pytest.mark.parametrize("kwargs", [{"gaussian_sigma": -1.0}, {"dropout_prob": 1.5}, {"failed_channels": {-1}}])
def test_noise_config_ranges(kwargs):
    with pytest.raises(ValueError):
        NoiseConfig(**kwargs)
