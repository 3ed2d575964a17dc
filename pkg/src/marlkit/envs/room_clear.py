"""Grid room-clearing combat: a red team against a blue team.

Red agents are the learners; blue agents are usually driven by the scripted
door-entry doctrine in :class:`BlueDoctrine`. Agents ``0..n_red-1`` are red,
the rest blue.

Each tick resolves in three phases: every attack lands simultaneously on the
attacker's nearest damageable living enemy (Chebyshev distance, ties to the
lowest agent index); damage and deaths are applied; then moves resolve in
agent-index order, blocked by walls, barricades and occupied cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from importlib import resources

import numpy as np

from ..errors import ActionError, LayoutError
from .base import MultiAgentEnv, SpaceSpec, StepResult
from .grid import GridLayout, VisibilityTable, chebyshev, safe_cells

__all__ = [
    "CombatAction", "CombatConfig", "CombatState", "RoomClearEnv", "BlueDoctrine",
    "default_layout", "arena_layout", "scripted_blue_action", "DEFAULT_SAFE_CELLS",
]


class CombatAction(IntEnum):
    MOVE_NORTH = 0
    MOVE_SOUTH = 1
    MOVE_EAST = 2
    MOVE_WEST = 3
    ATTACK = 4
    NOOP = 5


_DELTAS = {
    CombatAction.MOVE_NORTH: (-1, 0),
    CombatAction.MOVE_SOUTH: (1, 0),
    CombatAction.MOVE_EAST: (0, 1),
    CombatAction.MOVE_WEST: (0, -1),
}

# the two overwatch cells of the default layout
DEFAULT_SAFE_CELLS = frozenset({(2, 4), (2, 9)})


@dataclass(frozen=True)
class CombatConfig:
    hp_max: int = 3
    attack_damage: int = 1
    attack_range: int = 6
    kill_reward: float = 1.0
    survivor_bonus: float = 0.5
    step_cap: int = 200
    view_size: int = 7

    def __post_init__(self):
        for name in ("hp_max", "attack_damage", "attack_range", "step_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.view_size <= 0 or self.view_size % 2 == 0:
            raise ValueError("view_size must be a positive odd integer")


def _load_layout(filename):
    text = resources.files("marlkit.envs").joinpath("layouts").joinpath(filename).read_text(encoding="utf-8")
    return GridLayout.from_text(text, name=filename.rsplit(".", 1)[0])


@lru_cache(maxsize=None)
def default_layout():
    """12x12 room, south door, two barricaded overwatch cells mid-room."""
    return _load_layout("room_clear_default.txt")


@lru_cache(maxsize=None)
def arena_layout():
    """Point-symmetric 2v2 arena used for self-play tournaments."""
    return _load_layout("arena_2v2.txt")


@lru_cache(maxsize=32)
def visibility_table(layout, attack_range):
    return VisibilityTable(layout, attack_range)


@dataclass
class CombatState:
    """Snapshot of the world handed to scripted policies."""

    positions: list
    hp: np.ndarray
    team: list
    tick: int

    @property
    def alive(self):
        return self.hp > 0

    def living(self, team):
        return [i for i, t in enumerate(self.team) if t == team and self.hp[i] > 0]


class RoomClearEnv(MultiAgentEnv):
    noop_action = int(CombatAction.NOOP)

    def __init__(self, layout=None, config=None, n_red=2, n_blue=3):
        super().__init__()
        self.layout = layout or default_layout()
        self.config = config or CombatConfig()
        if n_red < 1 or n_blue < 1:
            raise LayoutError("both teams need at least one agent")
        if n_red > len(self.layout.red_spawns) or n_blue > len(self.layout.blue_spawns):
            raise LayoutError("layout has fewer spawn cells than agents")
        spawns = list(self.layout.red_spawns) + list(self.layout.blue_spawns)
        if len(set(spawns)) != len(spawns):
            raise LayoutError("spawn cells overlap")
        self.n_red, self.n_blue = n_red, n_blue
        self.n_agents = n_red + n_blue
        self.team = ["red"] * n_red + ["blue"] * n_blue
        self.teams = {"red": list(range(n_red)), "blue": list(range(n_red, self.n_agents))}
        v = self.config.view_size
        self.obs_dim = v * v * 4 + 1 + 2
        self.observation_spaces = [
            SpaceSpec("continuous", self.obs_dim, tuple([(0.0, 1.0)] * self.obs_dim))
        ] * self.n_agents
        self.action_spaces = [SpaceSpec("discrete", len(CombatAction))] * self.n_agents
        self.table = visibility_table(self.layout, self.config.attack_range)
        pad = v // 2
        self._pad = pad
        walls = np.pad(self.layout.wall_mask.astype(np.float64), pad, constant_values=1.0)
        bars = np.pad(self.layout.barricade_mask.astype(np.float64), pad, constant_values=0.0)
        self._static = (walls, bars)
        self.positions = []
        self.hp = np.zeros(self.n_agents, dtype=int)
        self.tick = 0

    # -- state helpers ---------------------------------------------------------------
    @property
    def alive(self):
        return self.hp > 0

    def state(self):
        return CombatState(list(self.positions), self.hp.copy(), list(self.team), self.tick)

    def survivors(self, team):
        return int(sum(self.hp[i] > 0 for i in self.teams[team]))

    def _nearest_target(self, i):
        me = self.positions[i]
        enemy = "blue" if self.team[i] == "red" else "red"
        best, best_d = None, None
        for j in self.teams[enemy]:
            if self.hp[j] <= 0:
                continue
            if not self.table.can_damage(me, self.positions[j]):
                continue
            d = chebyshev(me, self.positions[j])
            if best is None or d < best_d:
                best, best_d = j, d
        return best

    def observe(self, i):
        if self.hp[i] <= 0:
            return np.zeros(self.obs_dim)
        v, pad = self.config.view_size, self._pad
        H, W = self.layout.height, self.layout.width
        mates = np.zeros((H + 2 * pad, W + 2 * pad))
        foes = np.zeros_like(mates)
        for j, (r, c) in enumerate(self.positions):
            if j == i or self.hp[j] <= 0:
                continue
            (mates if self.team[j] == self.team[i] else foes)[r + pad, c + pad] = 1.0
        r, c = self.positions[i]
        walls, bars = self._static
        window = [m[r:r + v, c:c + v].ravel() for m in (walls, bars, mates, foes)]
        tail = [self.hp[i] / self.config.hp_max, r / max(H - 1, 1), c / max(W - 1, 1)]
        return np.concatenate(window + [np.asarray(tail)])

    def observations(self):
        return [self.observe(i) for i in range(self.n_agents)]

    # -- contract --------------------------------------------------------------
    def _reset(self, seed):
        rng = np.random.default_rng(seed)
        reds = [self.layout.red_spawns[k] for k in rng.permutation(len(self.layout.red_spawns))]
        self.positions = reds[:self.n_red] + list(self.layout.blue_spawns[:self.n_blue])
        self.hp = np.full(self.n_agents, self.config.hp_max, dtype=int)
        self.tick = 0
        return self.observations()

    def _step(self, actions):
        cfg = self.config
        actions = [CombatAction(int(a)) for a in actions]
        for i, a in enumerate(actions):
            if self.hp[i] <= 0 and a != CombatAction.NOOP:
                raise ActionError(f"agent {i} is dead and must be sent NOOP")
        rewards = np.zeros(self.n_agents)

        # (1) attacks pick targets against the pre-tick state
        hits = {}
        for i, a in enumerate(actions):
            if a == CombatAction.ATTACK:
                j = self._nearest_target(i)
                if j is not None:
                    hits.setdefault(j, []).append(i)
        # (2) damage and deaths
        died = []
        for j, attackers in hits.items():
            self.hp[j] = max(0, self.hp[j] - cfg.attack_damage * len(attackers))
            if self.hp[j] == 0:
                died.append(j)
                for i in attackers:
                    rewards[i] += cfg.kill_reward / len(attackers)
        # (3) moves in index order
        occupied = {p for k, p in enumerate(self.positions) if self.hp[k] > 0}
        for i, a in enumerate(actions):
            if self.hp[i] <= 0 or a not in _DELTAS:
                continue
            r, c = self.positions[i]
            dr, dc = _DELTAS[a]
            dest = (r + dr, c + dc)
            if not self.layout.in_bounds(dest) or self.layout.is_solid(dest) or dest in occupied:
                continue
            occupied.discard((r, c))
            occupied.add(dest)
            self.positions[i] = dest
        self.tick += 1

        red_alive, blue_alive = self.survivors("red"), self.survivors("blue")
        winner = None
        done = False
        if red_alive == 0 or blue_alive == 0:
            done = True
            if red_alive > 0:
                winner = "red"
            elif blue_alive > 0:
                winner = "blue"
        elif self.tick >= cfg.step_cap:
            done = True
        if winner is not None:
            n_left = self.survivors(winner)
            for i in self.teams[winner]:
                rewards[i] += cfg.survivor_bonus * n_left
        agent_done = ~self.alive if not done else np.ones(self.n_agents, dtype=bool)
        info = {
            "winner": winner,
            "win": winner == "red",
            "survivors": {"red": red_alive, "blue": blue_alive},
            "deaths": sorted(died),
            "tick": self.tick,
            "team_rewards": {t: float(np.mean(rewards[m])) for t, m in self.teams.items()},
        }
        return StepResult(self.observations(), rewards, agent_done, done, info)


class BlueDoctrine:
    """Scripted blue behaviour: queue at the door, enter one at a time, walk to
    an assigned post; shoot whenever a red agent can be damaged."""

    _ORDER = (CombatAction.MOVE_NORTH, CombatAction.MOVE_SOUTH,
              CombatAction.MOVE_EAST, CombatAction.MOVE_WEST)

    def __init__(self, layout, config=None):
        self.layout = layout
        self.config = config or CombatConfig()
        self.table = visibility_table(layout, self.config.attack_range)
        self.post_distance = [layout.bfs_distances([p]) for p in layout.blue_posts]

    def action(self, agent_index, state):
        if state.hp[agent_index] <= 0:
            return CombatAction.NOOP
        me = state.positions[agent_index]
        for j in state.living("red"):
            if self.table.can_damage(me, state.positions[j]):
                return CombatAction.ATTACK
        blues = [i for i, t in enumerate(state.team) if t == "blue"]
        rank = blues.index(agent_index)
        if rank > 0:
            prev = blues[rank - 1]
            if state.hp[prev] > 0 and state.positions[prev] not in self.layout.interior:
                return CombatAction.NOOP
        if rank >= len(self.post_distance):
            return CombatAction.NOOP
        dist = self.post_distance[rank]
        here = dist.get(me)
        if here is None or here == 0:
            return CombatAction.NOOP
        occupied = {p for k, p in enumerate(state.positions) if state.hp[k] > 0}
        for a in self._ORDER:
            dr, dc = _DELTAS[a]
            n = (me[0] + dr, me[1] + dc)
            if dist.get(n) == here - 1 and n not in occupied:
                return a
        return CombatAction.NOOP

    def actions(self, state):
        return [int(self.action(i, state)) for i, t in enumerate(state.team) if t == "blue"]


@lru_cache(maxsize=32)
def _doctrine(layout, config):
    return BlueDoctrine(layout, config)


def scripted_blue_action(agent_index, world_state, layout, config=None):
    return _doctrine(layout, config or CombatConfig()).action(agent_index, world_state)


def layout_safe_cells(layout=None, config=None):
    layout = layout or default_layout()
    config = config or CombatConfig()
    return safe_cells(layout, config.attack_range, visibility_table(layout, config.attack_range))
