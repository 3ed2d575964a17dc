"""The ``tournament`` command: self-play training of a MADDPG population.

Each generation every member trains as the red team against a frozen,
greedy copy of the next member (index order, wrapping) playing blue; then
all members meet in a round-robin tournament on the symmetric arena and
the population evolves. Every member checkpoint is kept, tagged with its
lineage id and version, as a replayable policy log.
"""

from __future__ import annotations

import csv
import copy
from pathlib import Path

import numpy as np

from ..algorithms import MaddpgLearner
from ..envs.room_clear import RoomClearEnv
from ..envs.wrappers import ControlledTeamEnv
from ..meta import Population, derived_seed, evolve_population, run_tournament
from ..replay import ReplayBuffer, Transition
from .checkpoint import save_checkpoint
from .runtime import combat_config, resolve_layout, stored_actions


def arena_env(cfg):
    e = cfg.env
    layout = resolve_layout(cfg.population["layout"])
    n = min(len(layout.red_spawns), len(layout.blue_spawns))
    return RoomClearEnv(layout, combat_config(e), n, n)


def greedy_opponent(policy, team):
    def act(env):
        obs = env.observations()
        members = env.teams[team]
        acts = policy.act([obs[i] for i in members], explore=False)
        return [a if env.alive[i] else env.noop_action for i, a in zip(members, acts)]
    return act


def self_play_train(cfg, learner, opponent, episodes, seed):
    """Train ``learner`` as red against a frozen ``opponent`` playing blue."""
    env = ControlledTeamEnv(arena_env(cfg), "red", greedy_opponent(opponent, "blue"))
    hp = learner.hp
    buffer = ReplayBuffer(hp.buffer_capacity)
    rng = np.random.default_rng(derived_seed(seed, 1))
    step = 0
    for ep in range(episodes):
        obs = env.reset(derived_seed(seed, 2, ep))
        done = False
        while not done:
            actions = learner.act(obs, explore=True)
            res = env.step(actions)
            buffer.push(Transition(list(obs), stored_actions(learner, actions), list(res.rewards),
                                   list(res.observations), res.episode_done))
            obs, done = res.observations, res.episode_done
            step += 1
            if len(buffer) >= hp.batch_size and step % hp.update_every == 0:
                learner.update(buffer.sample_batch(hp.batch_size, rng))
    return learner


def tournament_command(cfg, seed=None):
    """Run the configured generations; returns a list of per-generation summaries."""
    pop_cfg = cfg.population
    seed = cfg.seeds[0] if seed is None else seed
    out = Path(cfg.output_dir) / "population"
    out.mkdir(parents=True, exist_ok=True)
    probe = arena_env(cfg)
    dims = [probe.obs_dim] * probe.n_red
    learners = [MaddpgLearner(dims, [6] * probe.n_red, cfg.hyperparams, derived_seed(seed, 3, k))
                for k in range(pop_cfg["size"])]
    pop = Population.from_learners(learners)
    rng = np.random.default_rng(derived_seed(seed, 4))
    summaries = []
    for gen in range(pop_cfg["generations"] + 1):
        if pop_cfg["train_episodes"] > 0:
            frozen = [copy.deepcopy(m.policy) for m in pop.members]
            for k, m in enumerate(pop.members):
                self_play_train(cfg, m.policy, frozen[(k + 1) % pop.size], pop_cfg["train_episodes"],
                                derived_seed(seed, 5, gen, k))
                m.version += 1
        table = run_tournament(pop, lambda: arena_env(cfg), pop_cfg["episodes_per_pair"],
                               derived_seed(seed, 6, gen))
        for k, m in enumerate(pop.members):
            save_checkpoint(m.policy, out / f"gen{gen:03d}_lineage{m.lineage_id:04d}_v{m.version:03d}.ckpt",
                            {"generation": gen, "member": k, "lineage_id": m.lineage_id,
                             "parent_id": m.parent_id, "version": m.version, "fitness": m.fitness})
        with open(out / f"gen{gen:03d}_pairs.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member_a", "member_b", "wins_a", "losses_a", "draws"])
            for row in table.rows():
                w.writerow([row["member_a"], row["member_b"], row["wins_a"], row["losses_a"], row["draws"]])
        with open(out / f"gen{gen:03d}_fitness.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member", "lineage_id", "parent_id", "version", "fitness", "learning_rate"])
            for k, m in enumerate(pop.members):
                w.writerow([k, m.lineage_id, "" if m.parent_id is None else m.parent_id, m.version,
                            repr(m.fitness), repr(m.hyperparams.learning_rate)])
        summaries.append({"generation": gen, "fitness": [m.fitness for m in pop.members],
                          "lineages": [m.lineage_id for m in pop.members]})
        if gen < pop_cfg["generations"]:
            pop = evolve_population(pop, table, rng)
    return summaries
