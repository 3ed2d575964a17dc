"""Plays the default room-clearing layout with a hand-written red policy.

The two red agents walk to the overwatch cells behind the barricades and
fire from there while the scripted blue team enters the room. Every few
ticks the grid is printed (R/B agents, x where one died).

    python3 demos/room_clear_walkthrough.py
"""

from marlkit.envs.room_clear import CombatAction as A
from marlkit.envs.room_clear import default_layout, layout_safe_cells
from marlkit.envs.wrappers import red_vs_scripted_blue


def render(env):
    core = env.env
    text = core.layout.to_text().replace("r", ".").replace("b", ".")
    grid = [list(row) for row in text.splitlines()]
    for i, (r, c) in enumerate(core.positions):
        mark = "R" if core.team[i] == "red" else "B"
        grid[r][c] = mark if core.hp[i] > 0 else "x"
    return "\n".join("".join(row) for row in grid)


def overwatch_policy(tick, alive):
    # east, east, south reaches (2,4) from (1,2) and (2,9) from (1,7)
    plan = [A.MOVE_EAST, A.MOVE_EAST, A.MOVE_SOUTH]
    move = plan[tick] if tick < len(plan) else A.ATTACK
    return [int(move) if a else int(A.NOOP) for a in alive]


def main():
    print("safe cells:", sorted(layout_safe_cells(default_layout())))
    env = red_vs_scripted_blue()
    for seed in (0, 3):
        env.reset(seed)
        tick, done = 0, False
        while not done:
            res = env.step(overwatch_policy(tick, env.alive()))
            done = res.episode_done
            tick += 1
            if tick in (1, 4, 8) or done:
                print(f"\nseed {seed}, tick {tick}")
                print(render(env))
        info = res.info
        print(f"winner {info['winner']}, survivors {info['survivors']}, ticks {info['tick']}")


if __name__ == "__main__":
    main()
