import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_safe_cells, exact_can_damage, exact_supercover
from marlkit.envs.grid import GridLayout, can_damage, line_of_sight, safe_cells, supercover
from marlkit.envs.room_clear import (DEFAULT_SAFE_CELLS, BlueDoctrine, CombatAction, CombatConfig,
                                     RoomClearEnv, default_layout, layout_safe_cells)
from marlkit.errors import ActionError, EpisodeDoneError, LayoutError

A = CombatAction


def random_layout(rng, size=10, density=0.2, barricades=0.0):
    walls = {(r, c) for r in range(size) for c in range(size) if rng.random() < density}
    bars = {(r, c) for r in range(size) for c in range(size)
            if (r, c) not in walls and rng.random() < barricades}
    return GridLayout(size, size, frozenset(walls), barricades=frozenset(bars))


def corridor(text, **config):
    layout = GridLayout.from_text(text)
    n_red, n_blue = len(layout.red_spawns), len(layout.blue_spawns)
    env = RoomClearEnv(layout, CombatConfig(**config), n_red=n_red, n_blue=n_blue)
    env.reset(0)
    return env


# -- layouts ---------------------------------------------------------------------------------

def test_default_layout_text_roundtrip():
    layout = default_layout()
    again = GridLayout.from_text(layout.to_text())
    assert again.walls == layout.walls and again.barricades == layout.barricades
    assert again.blue_posts == layout.blue_posts and again.door_cells == layout.door_cells
    assert (layout.width, layout.height) == (12, 12)
    assert len(layout.blue_posts) == 3


@pytest.mark.parametrize("text", ["", "#x#\n", "###\n##\n"])
def test_malformed_layout_text(text):
    with pytest.raises(LayoutError):
        GridLayout.from_text(text)


def test_spawn_on_wall_rejected():
    with pytest.raises(LayoutError):
        GridLayout(3, 3, frozenset({(1, 1)}), red_spawns=((1, 1),))


def test_door_connects_spawns_to_interior():
    layout = default_layout()
    assert set(layout.blue_posts) <= layout.blue_reachable
    assert not set(layout.blue_spawns) & layout.interior


# -- supercover and line of sight --------------------------------------------------------------

def test_supercover_through_a_corner_takes_all_four_cells():
    assert set(supercover((0, 0), (1, 1))) == {(0, 0), (0, 1), (1, 0), (1, 1)}


@given(st.tuples(st.integers(0, 12), st.integers(0, 12)), st.tuples(st.integers(0, 12), st.integers(0, 12)))
@settings(max_examples=300, deadline=None)
def test_supercover_matches_exact_geometry_and_is_symmetric(a, b):
    cells = supercover(a, b)
    assert set(cells) == exact_supercover(a, b)
    assert set(supercover(b, a)) == set(cells)
    assert cells[0] == a and cells[-1] == b


def test_los_adjacent_and_blocked():
    layout = GridLayout(5, 1, frozenset({(0, 2)}))
    assert line_of_sight((0, 0), (0, 1), layout)
    assert not line_of_sight((0, 0), (0, 4), layout)


def test_barricades_do_not_block_sight():
    layout = GridLayout(5, 1, frozenset(), barricades=frozenset({(0, 2)}))
    assert line_of_sight((0, 0), (0, 4), layout)


def test_los_matches_exact_oracle_on_random_layouts():
    rng = np.random.default_rng(0)
    for k in range(500):
        layout = random_layout(rng)
        a, b = tuple(rng.integers(0, 10, 2)), tuple(rng.integers(0, 10, 2))
        a, b = (int(a[0]), int(a[1])), (int(b[0]), int(b[1]))
        expected = not (exact_supercover(a, b) & layout.walls)
        assert line_of_sight(a, b, layout) == expected
        assert line_of_sight(b, a, layout) == expected


# -- can_damage ----------------------------------------------------------------------------------

def test_fire_over_own_barricade_but_not_back():
    layout = default_layout()
    centre = layout.blue_posts[0]
    for cell in DEFAULT_SAFE_CELLS:
        assert can_damage(cell, centre, layout, 6)
        assert not can_damage(centre, cell, layout, 6)


def test_open_ground_is_symmetric_and_range_limited():
    layout = GridLayout(10, 10, frozenset())
    assert can_damage((0, 0), (3, 5), layout, 6) and can_damage((3, 5), (0, 0), layout, 6)
    assert not can_damage((0, 0), (0, 7), layout, 6)
    assert can_damage((0, 0), (6, 6), layout, 6)


def test_can_damage_matches_exact_oracle_and_is_symmetric_without_barricades():
    rng = np.random.default_rng(1)
    for k in range(300):
        layout = random_layout(rng, barricades=0.1 if k % 2 else 0.0)
        a = (int(rng.integers(10)), int(rng.integers(10)))
        b = (int(rng.integers(10)), int(rng.integers(10)))
        got = can_damage(a, b, layout, 6)
        assert got == exact_can_damage(a, b, layout, 6)
        if not layout.barricades:
            assert got == can_damage(b, a, layout, 6)


# -- safe cells --------------------------------------------------------------------------------

def test_default_layout_has_exactly_the_two_safe_cells():
    assert layout_safe_cells() == set(DEFAULT_SAFE_CELLS)
    assert brute_force_safe_cells(default_layout(), 6) == set(DEFAULT_SAFE_CELLS)


def test_no_barricades_no_safe_cells():
    layout = default_layout()
    bare = GridLayout(layout.width, layout.height, layout.walls, layout.door_cells, frozenset(),
                      layout.blue_spawns, layout.red_spawns, layout.blue_posts)
    assert safe_cells(bare, 6) == set()


def test_walled_in_cell_is_not_safe():
    layout = default_layout()
    r, c = (2, 4)
    ring = {(r + dr, c + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)}
    boxed = GridLayout(layout.width, layout.height, layout.walls | ring, layout.door_cells,
                       layout.barricades - ring, layout.blue_spawns, layout.red_spawns, layout.blue_posts)
    assert (2, 4) not in safe_cells(boxed, 6)
    assert (2, 9) in safe_cells(boxed, 6)


# -- reset / observations -------------------------------------------------------------------------

def test_default_reset_shapes():
    env = RoomClearEnv()
    obs = env.reset(0)
    assert len(obs) == 5
    assert all(o.shape == (7 * 7 * 4 + 1 + 2,) for o in obs)
    assert env.teams == {"red": [0, 1], "blue": [2, 3, 4]}
    assert set(env.positions[:2]) == set(default_layout().red_spawns)
    assert env.positions[2:] == list(default_layout().blue_spawns)


def test_reset_is_deterministic():
    a, b = RoomClearEnv(), RoomClearEnv()
    assert all(np.array_equal(x, y) for x, y in zip(a.reset(9), b.reset(9)))
    assert a.positions == b.positions


def test_observation_channels():
    env = corridor("#####\n#r.b#\n#####\n")
    o = env.observe(0).reshape(-1)
    view = o[:49 * 4].reshape(4, 7, 7)
    assert view[0, 3, 3] == 0 and view[0, 2, 3] == 1  # walls above
    assert view[3, 3, 5] == 1  # enemy two cells east
    assert view[2].sum() == 0
    assert o[49 * 4] == 1.0  # full hp


# -- step resolution -------------------------------------------------------------------------

def test_lone_red_kills_lone_blue():
    env = corridor("#####\n#r.b#\n#####\n", hp_max=1)
    res = env.step([A.ATTACK, A.NOOP])
    assert env.hp.tolist() == [1, 0]
    assert res.rewards[0] == pytest.approx(1.0 + 0.5 * 1)
    assert res.rewards[1] == 0
    assert res.episode_done and res.info["winner"] == "red" and res.info["deaths"] == [1]


def test_simultaneous_killers_split_the_reward():
    env = corridor("#######\n#r.b.r#\n#######\n", hp_max=1)
    res = env.step([A.ATTACK, A.ATTACK, A.NOOP])
    kill = res.rewards[:2] - 0.5 * 2
    assert kill.tolist() == [0.5, 0.5]


def test_mutual_kill_is_a_draw():
    env = corridor("#####\n#r.b#\n#####\n", hp_max=1)
    res = env.step([A.ATTACK, A.ATTACK])
    assert res.episode_done and res.info["winner"] is None
    assert res.rewards.tolist() == [1.0, 1.0]


def test_step_cap_is_a_draw_without_bonus():
    env = corridor("#######\n#r.#.b#\n#######\n", step_cap=3)
    for _ in range(3):
        res = env.step([A.NOOP, A.NOOP])
    assert res.episode_done and res.info["winner"] is None
    assert res.rewards.tolist() == [0.0, 0.0]
    with pytest.raises(EpisodeDoneError):
        env.step([A.NOOP, A.NOOP])


def test_nearest_target_with_ties_to_lowest_index():
    env = corridor("#######\n#b.r.b#\n#######\n")
    env.step([A.ATTACK, A.NOOP, A.NOOP])
    assert env.hp.tolist() == [3, 2, 3]


def test_moves_resolve_in_index_order():
    env = corridor("######\n#rr.b#\n######\n", attack_range=1)
    # agent 0 moves into the cell agent 1 only vacates afterwards
    env.step([A.MOVE_EAST, A.MOVE_EAST, A.NOOP])
    assert env.positions[:2] == [(1, 1), (1, 3)]


def test_dead_agent_must_noop():
    env = corridor("#######\n#r.b.r#\n#######\n", hp_max=1)
    env.hp[0] = 0
    with pytest.raises(ActionError):
        env.step([A.ATTACK, A.NOOP, A.NOOP])
    assert np.array_equal(env.observe(0), np.zeros(env.obs_dim))


@given(st.integers(0, 10_000), st.lists(st.lists(st.integers(0, 5), min_size=2, max_size=2), max_size=150))
@settings(max_examples=40, deadline=None)
def test_combat_invariants(seed, red_moves):
    env = RoomClearEnv()
    env.reset(seed)
    doctrine = BlueDoctrine(env.layout, env.config)
    for moves in red_moves:
        hp_before = env.hp.copy()
        reds = [m if env.hp[i] > 0 else A.NOOP for i, m in enumerate(moves)]
        res = env.step(reds + doctrine.actions(env.state()))
        assert np.all(env.hp <= hp_before)
        living = [p for p, h in zip(env.positions, env.hp) if h > 0]
        assert len(living) == len(set(living))
        kills = res.rewards.copy()
        if res.info["winner"]:
            n = res.info["survivors"][res.info["winner"]]
            kills[env.teams[res.info["winner"]]] -= 0.5 * n
        assert kills.sum() == pytest.approx(len(res.info["deaths"]) * env.config.kill_reward)
        if res.episode_done:
            break


# -- scripted blue ---------------------------------------------------------------------------

def test_blue_enters_one_at_a_time():
    env = RoomClearEnv()
    env.reset(0)
    acts = BlueDoctrine(env.layout).actions(env.state())
    assert acts[0] != A.NOOP
    assert acts[1:] == [A.NOOP, A.NOOP]


def test_blue_attacks_when_red_damageable():
    env = corridor("#####\n#r.b#\n#####\n")
    layout = env.layout
    layout = GridLayout(layout.width, layout.height, layout.walls, blue_spawns=layout.blue_spawns,
                        red_spawns=layout.red_spawns, blue_posts=((1, 1),))
    assert BlueDoctrine(layout).action(1, env.state()) == A.ATTACK


def test_blue_reaches_posts_along_shortest_paths():
    # reds sealed in a closet east of the room, so blue never makes contact
    rows = default_layout().to_text().replace("r", ".").splitlines()
    rows = [row + ("r#" if k in (1, 2) else "##") for k, row in enumerate(rows)]
    layout = GridLayout.from_text("\n".join(rows))
    env = RoomClearEnv(layout)
    env.reset(0)
    doctrine = BlueDoctrine(layout)
    moves = [0, 0, 0]
    for _ in range(100):
        before = list(env.positions)
        env.step([A.NOOP, A.NOOP] + doctrine.actions(env.state()))
        moves = [m + (before[2 + k] != env.positions[2 + k]) for k, m in enumerate(moves)]
    assert env.positions[2:] == list(layout.blue_posts)
    for k in range(3):
        assert moves[k] == layout.bfs_distances([layout.blue_posts[k]])[layout.blue_spawns[k]]
