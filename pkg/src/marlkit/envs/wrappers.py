"""Environment wrappers: scripted opponents and observation corruption."""

from __future__ import annotations

import numpy as np

from .base import MultiAgentEnv, StepResult


class ControlledTeamEnv(MultiAgentEnv):
    """Expose one team of a multi-agent env; the rest follow ``opponent``.

    ``opponent(env)`` returns actions for the uncontrolled agents in index
    order. Dead controlled agents are always sent the env's no-op, whatever
    action the caller supplies.
    """

    def __init__(self, env, team, opponent):
        super().__init__()
        self.env = env
        self.team = team
        self.opponent = opponent
        self.members = list(env.teams[team])
        self.others = [i for i in range(env.n_agents) if i not in self.members]
        self.n_agents = len(self.members)
        self.observation_spaces = [env.observation_spaces[i] for i in self.members]
        self.action_spaces = [env.action_spaces[i] for i in self.members]
        self.teams = {team: list(range(self.n_agents))}
        self.obs_dim = getattr(env, "obs_dim", None)
        self.noop_action = env.noop_action

    def alive(self):
        return [bool(self.env.alive[i]) for i in self.members] if hasattr(self.env, "alive") else [True] * self.n_agents

    def _reset(self, seed):
        obs = self.env.reset(seed)
        return [obs[i] for i in self.members]

    def _step(self, actions):
        full = [None] * self.env.n_agents
        alive = self.alive()
        for k, i in enumerate(self.members):
            full[i] = actions[k] if alive[k] else self.env.noop_action
        for i, a in zip(self.others, self.opponent(self.env)):
            full[i] = a
        res = self.env.step(full)
        return StepResult([res.observations[i] for i in self.members],
                          res.rewards[self.members], res.agent_done[self.members],
                          res.episode_done, res.info)


def scripted_blue_opponent(env):
    """Opponent callable driving every blue agent of a :class:`RoomClearEnv` by doctrine."""
    from .room_clear import BlueDoctrine

    doctrine = BlueDoctrine(env.layout, env.config)
    return lambda e: doctrine.actions(e.state())


def red_vs_scripted_blue(**env_kwargs):
    from .room_clear import RoomClearEnv

    env = RoomClearEnv(**env_kwargs)
    return ControlledTeamEnv(env, "red", scripted_blue_opponent(env))
