"""Top-down take-cover task.

A single agent moves on a plane (x east, y north) containing walls and cover
boxes, all axis-aligned rectangles, and one static enemy. It must reach the
closest point from which every line to the enemy is blocked. It perceives
the scene through a fan of rays, each reporting a normalized hit distance and
a one-hot tag over ``(enemy, cover, wall, none)``.

Movement is world-frame; rotating only turns the ray fan. The agent lives on
the lattice ``start + step * Z^2`` so every position is exactly
reproducible and the scripted agent's plan is an exact BFS.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import LayoutError
from .base import MultiAgentEnv, SpaceSpec, StepResult

TAGS = ("enemy", "cover", "wall", "none")


class CoverAction(IntEnum):
    MOVE_NORTH = 0
    MOVE_SOUTH = 1
    MOVE_EAST = 2
    MOVE_WEST = 3
    ROTATE_LEFT = 4
    ROTATE_RIGHT = 5


_MOVES = {
    CoverAction.MOVE_NORTH: (0, 1),
    CoverAction.MOVE_SOUTH: (0, -1),
    CoverAction.MOVE_EAST: (1, 0),
    CoverAction.MOVE_WEST: (-1, 0),
}


@dataclass
class CoverLayout:
    arena: tuple
    walls: list
    cover_boxes: list
    enemy_pos: tuple
    agent_spawn: tuple
    cover_radius: float = 0.5

    def __post_init__(self):
        self.arena = tuple(float(v) for v in self.arena)
        self.walls = [tuple(float(v) for v in r) for r in self.walls]
        self.cover_boxes = [tuple(float(v) for v in r) for r in self.cover_boxes]
        self.enemy_pos = tuple(float(v) for v in self.enemy_pos)
        self.agent_spawn = tuple(float(v) for v in self.agent_spawn)
        for rect in self.walls + self.cover_boxes:
            if not (rect[0] < rect[2] and rect[1] < rect[3]):
                raise LayoutError(f"degenerate rectangle {rect}")
        for name in ("enemy_pos", "agent_spawn"):
            p = getattr(self, name)
            if not inside_arena(p, self.arena) or point_in_solid(p, self):
                raise LayoutError(f"{name} {p} must be inside the arena and outside all solids")

    @property
    def solids(self):
        return self.walls + self.cover_boxes

    def solid_array(self):
        return np.asarray(self.solids, dtype=np.float64).reshape(-1, 4)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else [list(r) for r in v] if isinstance(v, list) else v)
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class TakeCoverConfig:
    step_size: float = 0.25
    turn_degrees: float = 30.0
    n_rays: int = 24
    max_range: float | None = None
    step_cap: int = 500
    move_penalty: float = 1.0 / 5000.0
    cover_reward: float = 5.0
    enemy_radius: float = 0.3
    spawn_jitter: int = 2
    resolution: float = 0.1


@dataclass(frozen=True)
class LayoutParams:
    arena: tuple = (8.0, 8.0)
    n_boxes: tuple = (2, 3)
    box_size: tuple = (0.8, 1.6)
    n_walls: tuple = (0, 1)
    wall_length: tuple = (1.5, 3.0)
    wall_thickness: float = 0.2
    cover_radius: float = 0.5
    clearance: float = 0.4
    min_enemy_distance: float = 3.0
    target_distance: tuple = (1.0, 4.0)
    resolution: float = 0.1
    max_attempts: int = 200
    config: TakeCoverConfig = field(default_factory=TakeCoverConfig)


# -- geometry --------------------------------------------------------------------------

def inside_arena(p, arena):
    return 0.0 < p[0] < arena[0] and 0.0 < p[1] < arena[1]


def point_in_solid(p, layout):
    x, y = p
    return any(r[0] <= x <= r[2] and r[1] <= y <= r[3] for r in layout.solids)


def _points_in_rects(points, rects):
    """(n, 2) points x (m, 4) closed rectangles -> (n,) any-containment mask."""
    if len(rects) == 0:
        return np.zeros(len(points), dtype=bool)
    x = points[:, 0:1]
    y = points[:, 1:2]
    return np.any((x >= rects[:, 0]) & (x <= rects[:, 2]) & (y >= rects[:, 1]) & (y <= rects[:, 3]), axis=1)


def _slab(p, d, rects):
    """Entry/exit parameters of rays p + t*d against closed rectangles.

    ``p``: (n, 2), ``d``: (n, 2), ``rects``: (m, 4). Returns two (n, m) arrays;
    the ray misses a rectangle where enter > exit.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0 = (rects[None, :, 0] - p[:, 0:1]) / d[:, 0:1]
        tx1 = (rects[None, :, 2] - p[:, 0:1]) / d[:, 0:1]
        ty0 = (rects[None, :, 1] - p[:, 1:2]) / d[:, 1:2]
        ty1 = (rects[None, :, 3] - p[:, 1:2]) / d[:, 1:2]
    lo_x, hi_x = np.minimum(tx0, tx1), np.maximum(tx0, tx1)
    lo_y, hi_y = np.minimum(ty0, ty1), np.maximum(ty0, ty1)
    # axis-parallel rays: inside the slab -> unbounded, outside -> empty
    zx = d[:, 0:1] == 0.0
    in_x = (p[:, 0:1] >= rects[None, :, 0]) & (p[:, 0:1] <= rects[None, :, 2])
    lo_x = np.where(zx, np.where(in_x, -np.inf, np.inf), lo_x)
    hi_x = np.where(zx, np.where(in_x, np.inf, -np.inf), hi_x)
    zy = d[:, 1:2] == 0.0
    in_y = (p[:, 1:2] >= rects[None, :, 1]) & (p[:, 1:2] <= rects[None, :, 3])
    lo_y = np.where(zy, np.where(in_y, -np.inf, np.inf), lo_y)
    hi_y = np.where(zy, np.where(in_y, np.inf, -np.inf), hi_y)
    return np.maximum(lo_x, lo_y), np.minimum(hi_x, hi_y)


def segments_blocked(starts, ends, rects):
    """Whether each open segment start->end meets any closed rectangle."""
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    ends = np.broadcast_to(np.asarray(ends, dtype=np.float64), starts.shape)
    if len(rects) == 0:
        return np.zeros(len(starts), dtype=bool)
    enter, exit_ = _slab(starts, ends - starts, np.asarray(rects, dtype=np.float64))
    hit = (enter <= exit_) & (exit_ > 0.0) & (enter < 1.0)
    return hit.any(axis=1)


def is_covered(point, layout):
    """True iff the open segment from ``point`` to the enemy meets a wall or cover box."""
    if point_in_solid(point, layout):
        raise LayoutError(f"point {tuple(point)} lies inside a solid")
    return bool(segments_blocked([point], layout.enemy_pos, layout.solid_array())[0])


def covered_mask(points, layout):
    return segments_blocked(points, layout.enemy_pos, layout.solid_array())


def cast_rays(origin, angles, layout, enemy_radius, max_range):
    """First hits of rays from ``origin``. Returns (distances, tag indices)."""
    d = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    p = np.broadcast_to(np.asarray(origin, dtype=np.float64), d.shape)
    n = len(angles)
    best = np.full(n, np.inf)
    tag = np.full(n, TAGS.index("none"))
    # arena boundary: the ray leaves the box at its exit parameter
    w, h = layout.arena
    _, exit_ = _slab(p, d, np.array([[0.0, 0.0, w, h]]))
    best = np.minimum(best, exit_[:, 0])
    tag[:] = TAGS.index("wall")
    for rects, name in ((layout.walls, "wall"), (layout.cover_boxes, "cover")):
        if not rects:
            continue
        enter, exit_ = _slab(p, d, np.asarray(rects, dtype=np.float64))
        t = np.where((enter <= exit_) & (exit_ >= 0.0), np.maximum(enter, 0.0), np.inf).min(axis=1)
        closer = t < best
        best = np.where(closer, t, best)
        tag = np.where(closer, TAGS.index(name), tag)
    # enemy body: |p + t d - e|^2 = r^2 with |d| = 1
    oc = p - np.asarray(layout.enemy_pos)
    b = np.sum(oc * d, axis=1)
    c = np.sum(oc * oc, axis=1) - enemy_radius ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t_e = np.where(disc >= 0.0, -b - np.sqrt(np.maximum(disc, 0.0)), np.inf)
    t_e = np.where(t_e >= 0.0, t_e, np.inf)
    closer = t_e < best
    best = np.where(closer, t_e, best)
    tag = np.where(closer, TAGS.index("enemy"), tag)
    far = best > max_range
    tag = np.where(far, TAGS.index("none"), tag)
    best = np.where(far, max_range, best)
    return best, tag


# -- candidate grid / oracle -----------------------------------------------------------

def _candidate_grid(layout, resolution, enemy_radius):
    w, h = layout.arena
    nx = int(np.floor(w / resolution + 1e-9))
    ny = int(np.floor(h / resolution + 1e-9))
    ix, iy = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    pts = np.stack([ix.ravel() * resolution, iy.ravel() * resolution], axis=1)
    free = (pts[:, 0] > 0) & (pts[:, 0] < w) & (pts[:, 1] > 0) & (pts[:, 1] < h)
    free &= ~_points_in_rects(pts, layout.solid_array())
    free &= np.hypot(pts[:, 0] - layout.enemy_pos[0], pts[:, 1] - layout.enemy_pos[1]) > enemy_radius
    return pts, free, (nx + 1, ny + 1)


def _grid_components(pts, free, shape, rects):
    nx, ny = shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols = [], []
    for a, b in ((idx[:-1, :], idx[1:, :]), (idx[:, :-1], idx[:, 1:])):
        a, b = a.ravel(), b.ravel()
        ok = free[a] & free[b]
        a, b = a[ok], b[ok]
        if len(rects):
            blocked = segments_blocked(pts[a], pts[b], rects)
            a, b = a[~blocked], b[~blocked]
        rows.append(a)
        cols.append(b)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nx * ny, nx * ny))
    return connected_components(graph, directed=False)[1]


def oracle_cover_point(layout, resolution=0.1, enemy_radius=0.3):
    """Closest covered candidate grid point reachable from the spawn.

    Ties on distance go to the lowest x, then lowest y.
    """
    pts, free, shape = _candidate_grid(layout, resolution, enemy_radius)
    rects = layout.solid_array()
    labels = _grid_components(pts, free, shape, rects)
    spawn = np.asarray(layout.agent_spawn)
    d_spawn = np.hypot(pts[:, 0] - spawn[0], pts[:, 1] - spawn[1])
    # anchor: nearest free grid point with a clear straight path from the spawn
    order = np.argsort(np.where(free, d_spawn, np.inf), kind="stable")[:16]
    anchor = None
    for k in order:
        if free[k] and not segments_blocked([spawn], pts[k], rects)[0]:
            anchor = k
            break
    if anchor is None:
        raise LayoutError("spawn is not connected to the candidate grid")
    cand = free & (labels == labels[anchor])
    cand[cand] = covered_mask(pts[cand], layout)
    if not cand.any():
        raise LayoutError("no covered point is reachable from the spawn")
    k = np.flatnonzero(cand)
    dist = np.round(d_spawn[k], 9)
    best = k[np.lexsort((pts[k, 1], pts[k, 0], dist))[0]]
    return (float(pts[best, 0]), float(pts[best, 1]))


class MotionLattice:
    """The agent's reachable lattice for one layout and its BFS field to cover."""

    def __init__(self, layout, config, target):
        self.layout = layout
        self.config = config
        self.target = target
        s = config.step_size
        w, h = layout.arena
        ox, oy = layout.agent_spawn
        i_lo, i_hi = int(np.floor(-ox / s)) - 1, int(np.ceil((w - ox) / s)) + 1
        j_lo, j_hi = int(np.floor(-oy / s)) - 1, int(np.ceil((h - oy) / s)) + 1
        self.offset = (i_lo, j_lo)
        self.shape = (i_hi - i_lo + 1, j_hi - j_lo + 1)
        ii, jj = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1), indexing="ij")
        pts = np.stack([ox + s * ii.ravel(), oy + s * jj.ravel()], axis=1)
        free = (pts[:, 0] > 0) & (pts[:, 0] < w) & (pts[:, 1] > 0) & (pts[:, 1] < h)
        free &= ~_points_in_rects(pts, layout.solid_array())
        free &= np.hypot(pts[:, 0] - layout.enemy_pos[0], pts[:, 1] - layout.enemy_pos[1]) > config.enemy_radius
        self.free = free.reshape(self.shape)
        rects = layout.solid_array()
        # open[k, a]: move a from node k is legal
        nx, ny = self.shape
        self.open = np.zeros((nx, ny, 4), dtype=bool)
        for a, (di, dj) in _MOVES.items():
            mask = np.zeros_like(self.free)
            si = slice(max(0, -di), nx - max(0, di))
            sj = slice(max(0, -dj), ny - max(0, dj))
            ti = slice(max(0, di), nx - max(0, -di))
            tj = slice(max(0, dj), ny - max(0, -dj))
            mask[si, sj] = self.free[si, sj] & self.free[ti, tj]
            if len(rects) and mask.any():
                flat = mask.reshape(-1)
                k = np.flatnonzero(flat)
                flat[k[segments_blocked(pts[k], pts[k] + s * np.array([di, dj]), rects)]] = False
            self.open[:, :, int(a)] = mask
        self.points = pts.reshape(nx, ny, 2)
        tgt = np.asarray(target)
        self.goal = self.free & (np.hypot(self.points[..., 0] - tgt[0], self.points[..., 1] - tgt[1])
                                 <= layout.cover_radius)
        self.distance = self._bfs()

    def node(self, ij):
        return ij[0] - self.offset[0], ij[1] - self.offset[1]

    def position(self, ij):
        s = self.config.step_size
        return (self.layout.agent_spawn[0] + s * ij[0], self.layout.agent_spawn[1] + s * ij[1])

    def can_move(self, ij, action):
        a, b = self.node(ij)
        return bool(self.open[a, b, int(action)])

    def in_goal(self, ij):
        a, b = self.node(ij)
        return bool(self.goal[a, b])

    def steps_to_goal(self, ij):
        a, b = self.node(ij)
        d = self.distance[a, b]
        return None if d < 0 else int(d)

    def _bfs(self):
        nx, ny = self.shape
        dist = np.full((nx, ny), -1, dtype=int)
        queue = deque()
        for a, b in zip(*np.nonzero(self.goal)):
            dist[a, b] = 0
            queue.append((a, b))
        while queue:
            a, b = queue.popleft()
            for act, (di, dj) in _MOVES.items():
                # reverse edge: neighbour n moves onto (a, b) with the opposite action
                na, nb = a - di, b - dj
                if 0 <= na < nx and 0 <= nb < ny and dist[na, nb] < 0 and self.open[na, nb, int(act)]:
                    dist[na, nb] = dist[a, b] + 1
                    queue.append((na, nb))
        return dist


def scripted_oracle_action(agent_state, lattice):
    """Greedy step along a shortest lattice path to the cover circle.

    ``agent_state`` is the agent's lattice coordinate ``(i, j)``. Ties between
    equally short moves resolve in the order north, south, east, west.
    """
    here = lattice.steps_to_goal(agent_state)
    if here is None:
        raise LayoutError(f"cover region unreachable from lattice point {agent_state}")
    if here == 0:
        return CoverAction.MOVE_NORTH
    for action, (di, dj) in _MOVES.items():
        if lattice.can_move(agent_state, action):
            nxt = (agent_state[0] + di, agent_state[1] + dj)
            if lattice.steps_to_goal(nxt) == here - 1:
                return action
    raise LayoutError("inconsistent BFS field")


# -- layout generation -------------------------------------------------------------------

def _random_rect(rng, params, size_range=None, thickness=None):
    w, h = params.arena
    if thickness is None:
        sx, sy = rng.uniform(*size_range, size=2)
    else:
        length = rng.uniform(*params.wall_length)
        sx, sy = (length, thickness) if rng.random() < 0.5 else (thickness, length)
    x0 = rng.uniform(0.0, w - sx)
    y0 = rng.uniform(0.0, h - sy)
    return (round(x0, 3), round(y0, 3), round(x0 + sx, 3), round(y0 + sy, 3))


def _clear_of(p, rect, margin):
    return not (rect[0] - margin <= p[0] <= rect[2] + margin and rect[1] - margin <= p[1] <= rect[3] + margin)


def _attempt(rng, params):
    w, h = params.arena
    m = params.clearance
    enemy = (round(rng.uniform(m, w - m), 3), round(rng.uniform(m, h - m), 3))
    spawn = (round(rng.uniform(m, w - m), 3), round(rng.uniform(m, h - m), 3))
    if np.hypot(enemy[0] - spawn[0], enemy[1] - spawn[1]) < params.min_enemy_distance:
        return None
    boxes = [_random_rect(rng, params, params.box_size) for _ in range(rng.integers(params.n_boxes[0], params.n_boxes[1] + 1))]
    walls = [_random_rect(rng, params, thickness=params.wall_thickness)
             for _ in range(rng.integers(params.n_walls[0], params.n_walls[1] + 1))]
    for r in boxes + walls:
        if not (_clear_of(enemy, r, m) and _clear_of(spawn, r, m)):
            return None
    layout = CoverLayout((w, h), walls, boxes, enemy, spawn, params.cover_radius)
    if is_covered(spawn, layout):
        return None
    try:
        target = oracle_cover_point(layout, params.resolution, params.config.enemy_radius)
    except LayoutError:
        return None
    dist = np.hypot(target[0] - spawn[0], target[1] - spawn[1])
    if not params.target_distance[0] <= dist <= params.target_distance[1]:
        return None
    lattice = MotionLattice(layout, params.config, target)
    if lattice.steps_to_goal((0, 0)) is None or lattice.in_goal((0, 0)):
        return None
    return layout


def generate_layout(seed, params=None):
    """Random solvable layout, deterministic in ``seed``.

    Each attempt draws from its own child seed; a layout is accepted once the
    spawn is exposed, a covered point is reachable, and the agent's lattice
    reaches the cover circle.
    """
    params = params or LayoutParams()
    if params.n_boxes[1] <= 0:
        raise LayoutError(f"seed {seed}: at least one cover box is required for a covered point to exist")
    children = np.random.SeedSequence(seed).spawn(params.max_attempts)
    for child in children:
        layout = _attempt(np.random.default_rng(child), params)
        if layout is not None:
            return layout
    raise LayoutError(f"seed {seed}: no solvable layout within {params.max_attempts} attempts")


# -- environment ---------------------------------------------------------------------------

class TakeCoverEnv(MultiAgentEnv):
    """Single-agent take-cover task over one or more fixed layouts.

    ``reset(seed)`` picks a layout and a start point jittered by up to
    ``spawn_jitter`` lattice steps around the layout's spawn.
    """

    noop_action = None

    def __init__(self, layouts, config=None):
        super().__init__()
        if isinstance(layouts, CoverLayout):
            layouts = [layouts]
        if not layouts:
            raise LayoutError("need at least one layout")
        self.layouts = list(layouts)
        self.config = config or TakeCoverConfig()
        self.n_agents = 1
        self.teams = {"agent": [0]}
        cfg = self.config
        self.targets = [oracle_cover_point(l, cfg.resolution, cfg.enemy_radius) for l in self.layouts]
        self.lattices = [MotionLattice(l, cfg, t) for l, t in zip(self.layouts, self.targets)]
        self.obs_dim = cfg.n_rays * (1 + len(TAGS)) + 2
        self.observation_spaces = [SpaceSpec("continuous", self.obs_dim)]
        self.action_spaces = [SpaceSpec("discrete", len(CoverAction))]
        self._starts = [self._start_points(k) for k in range(len(self.layouts))]
        self._obs_cache = {}
        self.layout_index = 0
        self.ij = (0, 0)
        self.facing = 0
        self.tick = 0

    @property
    def layout(self):
        return self.layouts[self.layout_index]

    @property
    def lattice(self):
        return self.lattices[self.layout_index]

    @property
    def position(self):
        return self.lattice.position(self.ij)

    def max_range(self, layout):
        return self.config.max_range or float(np.hypot(*layout.arena))

    def _start_points(self, k):
        lat = self.lattices[k]
        J = self.config.spawn_jitter
        out = []
        for di in range(-J, J + 1):
            for dj in range(-J, J + 1):
                ij = (di, dj)
                a, b = lat.node(ij)
                if lat.free[a, b] and not lat.goal[a, b] and lat.distance[a, b] > 0:
                    out.append(ij)
        if not out:
            raise LayoutError(f"layout {k} has no valid start point")
        return out

    def observe(self):
        key = (self.layout_index, self.ij, self.facing)
        obs = self._obs_cache.get(key)
        if obs is None:
            cfg = self.config
            facing = np.deg2rad(cfg.turn_degrees * self.facing)
            angles = facing + 2.0 * np.pi * np.arange(cfg.n_rays) / cfg.n_rays
            rng_max = self.max_range(self.layout)
            dist, tag = cast_rays(self.position, angles, self.layout, cfg.enemy_radius, rng_max)
            onehot = np.zeros((cfg.n_rays, len(TAGS)))
            onehot[np.arange(cfg.n_rays), tag] = 1.0
            obs = np.concatenate([np.column_stack([dist / rng_max, onehot]).ravel(),
                                  [np.sin(facing), np.cos(facing)]])
            if len(self._obs_cache) < 200_000:
                self._obs_cache[key] = obs
        return obs.copy()

    def oracle_action(self):
        return scripted_oracle_action(self.ij, self.lattice)

    def oracle_steps(self):
        """BFS step count from the current position to the cover circle."""
        return self.lattice.steps_to_goal(self.ij)

    def _reset(self, seed):
        rng = np.random.default_rng(seed)
        self.layout_index = int(rng.integers(len(self.layouts)))
        starts = self._starts[self.layout_index]
        self.ij = starts[int(rng.integers(len(starts)))]
        self.facing = 0
        self.tick = 0
        self.start_steps = self.oracle_steps()
        return [self.observe()]

    def _step(self, actions):
        cfg = self.config
        action = CoverAction(int(actions[0]))
        if action in _MOVES:
            if self.lattice.can_move(self.ij, action):
                di, dj = _MOVES[action]
                self.ij = (self.ij[0] + di, self.ij[1] + dj)
        elif action == CoverAction.ROTATE_LEFT:
            self.facing = (self.facing + 1) % int(round(360.0 / cfg.turn_degrees))
        else:
            self.facing = (self.facing - 1) % int(round(360.0 / cfg.turn_degrees))
        self.tick += 1
        reward = -cfg.move_penalty
        success = self.lattice.in_goal(self.ij)
        if success:
            reward += cfg.cover_reward
        done = success or self.tick >= cfg.step_cap
        info = {"success": success, "win": success, "tick": self.tick,
                "layout": self.layout_index, "oracle_steps": self.start_steps,
                "team_rewards": {"agent": reward}}
        return StepResult([self.observe()], [reward], [done], done, info)
