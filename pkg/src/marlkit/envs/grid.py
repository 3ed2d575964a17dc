"""Grid layouts and visibility for the room-clearing environment.

Cells are ``(row, col)`` with row 0 at the top (north). Text layouts use one
character per cell::

    #  wall          B  barricade     D  door / entry corridor
    r  red spawn     b  blue spawn    P  blue post     .  floor

Posts are read in row-major order; the first post is the centre post.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ..errors import LayoutError

_CHARS = set("#BDrbP.")
MOVES = {"north": (-1, 0), "south": (1, 0), "east": (0, 1), "west": (0, -1)}


@dataclass(frozen=True, eq=False)
class GridLayout:
    width: int
    height: int
    walls: frozenset
    door_cells: tuple = ()
    barricades: frozenset = frozenset()
    blue_spawns: tuple = ()
    red_spawns: tuple = ()
    blue_posts: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        cells = [*self.walls, *self.door_cells, *self.barricades, *self.blue_spawns,
                 *self.red_spawns, *self.blue_posts]
        for r, c in cells:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise LayoutError(f"cell {(r, c)} is out of bounds")
        for kind in ("blue_spawns", "red_spawns", "blue_posts", "door_cells"):
            for cell in getattr(self, kind):
                if cell in self.walls or cell in self.barricades:
                    raise LayoutError(f"{kind} cell {cell} is a wall or barricade")

    def in_bounds(self, cell):
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_solid(self, cell):
        return cell in self.walls or cell in self.barricades

    @cached_property
    def wall_mask(self):
        m = np.zeros((self.height, self.width), dtype=bool)
        for r, c in self.walls:
            m[r, c] = True
        return m

    @cached_property
    def barricade_mask(self):
        m = np.zeros((self.height, self.width), dtype=bool)
        for r, c in self.barricades:
            m[r, c] = True
        return m

    @cached_property
    def free_cells(self):
        return [(r, c) for r in range(self.height) for c in range(self.width)
                if not self.is_solid((r, c))]

    def neighbors(self, cell):
        r, c = cell
        for dr, dc in MOVES.values():
            n = (r + dr, c + dc)
            if self.in_bounds(n) and not self.is_solid(n):
                yield n

    def bfs_distances(self, sources, blocked=()):
        """Shortest 4-connected path lengths from ``sources`` over free cells."""
        dist = {}
        queue = deque()
        for s in sources:
            if s not in dist:
                dist[s] = 0
                queue.append(s)
        blocked = set(blocked)
        while queue:
            cur = queue.popleft()
            for n in self.neighbors(cur):
                if n not in dist and n not in blocked:
                    dist[n] = dist[cur] + 1
                    queue.append(n)
        return dist

    @cached_property
    def blue_reachable(self):
        return frozenset(self.bfs_distances(self.blue_spawns))

    @cached_property
    def interior(self):
        """Free cells reachable from the posts without passing a door cell."""
        return frozenset(self.bfs_distances(self.blue_posts, blocked=self.door_cells))

    # text format ---------------------------------------------------------------
    @classmethod
    def from_text(cls, text, name=""):
        rows = [line.rstrip("\r") for line in text.strip("\n").split("\n")]
        rows = [r for r in rows if r.strip()]
        if not rows:
            raise LayoutError("empty layout")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise LayoutError("layout rows must all have the same length")
        walls, bars, doors, bsp, rsp, posts = set(), set(), [], [], [], []
        for i, row in enumerate(rows):
            for j, ch in enumerate(row):
                if ch not in _CHARS:
                    raise LayoutError(f"unknown layout character {ch!r} at {(i, j)}")
                cell = (i, j)
                if ch == "#":
                    walls.add(cell)
                elif ch == "B":
                    bars.add(cell)
                elif ch == "D":
                    doors.append(cell)
                elif ch == "b":
                    bsp.append(cell)
                elif ch == "r":
                    rsp.append(cell)
                elif ch == "P":
                    posts.append(cell)
        return cls(width, len(rows), frozenset(walls), tuple(doors), frozenset(bars),
                   tuple(bsp), tuple(rsp), tuple(posts), name=name)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), name=path.stem)

    def to_text(self):
        grid = [["."] * self.width for _ in range(self.height)]
        for cells, ch in ((self.walls, "#"), (self.barricades, "B"), (self.door_cells, "D"),
                          (self.blue_posts, "P"), (self.blue_spawns, "b"), (self.red_spawns, "r")):
            for r, c in cells:
                grid[r][c] = ch
        return "\n".join("".join(row) for row in grid) + "\n"


def supercover(a, b):
    """Cells whose closed square touches the segment between the centres of a and b.

    Passing exactly through a grid corner touches all four cells around it.
    The result is ordered from ``a`` to ``b`` and is the same set in either
    direction.
    """
    (r, c), (r1, c1) = a, b
    dr, dc = r1 - r, c1 - c
    sr = (dr > 0) - (dr < 0)
    sc = (dc > 0) - (dc < 0)
    nr, nc = abs(dr), abs(dc)
    cells = [(r, c)]
    ir = ic = 0
    while ir < nr or ic < nc:
        # next row boundary at t=(ir+1/2)/nr, next column boundary at (ic+1/2)/nc
        lhs = (2 * ir + 1) * nc
        rhs = (2 * ic + 1) * nr
        if lhs == rhs:
            cells.append((r + sr, c))
            cells.append((r, c + sc))
            r += sr
            c += sc
            ir += 1
            ic += 1
        elif lhs < rhs:
            r += sr
            ir += 1
        else:
            c += sc
            ic += 1
        cells.append((r, c))
    return cells


def chebyshev(a, b):
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def orthogonally_adjacent(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def line_of_sight(a, b, layout):
    """True iff the supercover line between a and b crosses no wall cell.

    Barricades never block sight.
    """
    return not any(cell in layout.walls for cell in supercover(a, b))


def can_damage(attacker, target, layout, attack_range):
    """Whether ``attacker`` can hit ``target``.

    Requires Chebyshev distance within ``attack_range``, no wall on the
    supercover line, and every barricade on the line orthogonally adjacent to
    the attacker (one fires over one's own barricade, never through a distant
    one).
    """
    if chebyshev(attacker, target) > attack_range:
        return False
    for cell in supercover(attacker, target):
        if cell in layout.walls:
            return False
        if cell in layout.barricades and not orthogonally_adjacent(cell, attacker):
            return False
    return True


class VisibilityTable:
    """Precomputed ``can_damage`` for every ordered pair of free cells."""

    def __init__(self, layout, attack_range):
        self.layout = layout
        self.attack_range = attack_range
        free = layout.free_cells
        self.index = {cell: i for i, cell in enumerate(free)}
        self.cells = free
        n = len(free)
        self.damage = np.zeros((n, n), dtype=bool)
        for i, a in enumerate(free):
            for j, b in enumerate(free):
                if i != j and chebyshev(a, b) <= attack_range:
                    self.damage[i, j] = can_damage(a, b, layout, attack_range)

    def can_damage(self, a, b):
        return bool(self.damage[self.index[a], self.index[b]])


def safe_cells(layout, attack_range, table=None):
    """Overwatch cells: they can hit the centre post, yet no blue-reachable
    cell that is not adjacent to them can hit them back."""
    if not layout.blue_posts:
        return set()
    table = table or VisibilityTable(layout, attack_range)
    centre = layout.blue_posts[0]
    reach = [b for b in layout.blue_reachable]
    out = set()
    for c in layout.free_cells:
        if c == centre or not table.can_damage(c, centre):
            continue
        exposed = any(chebyshev(b, c) > 1 and table.can_damage(b, c) for b in reach)
        if not exposed:
            out.add(c)
    return out
