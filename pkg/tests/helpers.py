"""Independent oracles shared by the tests."""

import numpy as np

# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE_LINES = {}


def numeric_gradients(net, x, upstream, h=1e-5):
    """Central finite differences of upstream . net(x) for every parameter and the input."""
    def objective():
        return float(np.sum(upstream * net(x)))

    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = p[i]
            p[i] = keep + h
            up = objective()
            p[i] = keep - h
            down = objective()
            p[i] = keep
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    gx = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        keep = x[i]
        x[i] = keep + h
        up = objective()
        x[i] = keep - h
        down = objective()
        x[i] = keep
        gx[i] = (up - down) / (2 * h)
    return grads, gx


def max_relative_error(analytic, numeric, floor=1e-6):
    a = np.concatenate([np.ravel(v) for v in analytic])
    n = np.concatenate([np.ravel(v) for v in numeric])
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def random_net_case(rng):
    """A random architecture, activation pair, input and upstream gradient."""
    from marlkit.nn import mlp_init

    depth = int(rng.integers(1, 4))
    sizes = [int(s) for s in rng.integers(1, 7, size=depth + 1)]
    hidden = ["tanh", "relu"][int(rng.integers(2))]
    output = ["identity", "tanh", "softmax"][int(rng.integers(3))]
    if output == "softmax" and sizes[-1] < 2:
        sizes[-1] = 2
    net = mlp_init(sizes, (hidden, output), int(rng.integers(1 << 30)))
    for b in net.biases:
        b[...] = rng.normal(scale=0.5, size=b.shape)
    x = rng.normal(size=sizes[0])
    up = rng.normal(size=sizes[-1])
    return net, x, up


def value_iteration(P, R, gamma, terminal, iters=5000):
    """Q* for a deterministic MDP with next-state table P[s, a] and rewards R[s, a]."""
    n_s, n_a = R.shape
    Q = np.zeros((n_s, n_a))
    for _ in range(iters):
        V = Q.max(axis=1)
        Q = R + gamma * np.where(terminal[:, :], 0.0, V[P])
    return Q


def sampled_segment_hits(p, q, rects, spacing=1e-3):
    """Dense-sampling oracle: does the open segment p->q touch a closed rectangle?"""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    n = max(2, int(np.ceil(np.hypot(*(q - p)) / spacing)))
    t = (np.arange(1, n) / n)[:, None]
    pts = p + t * (q - p)
    for x0, y0, x1, y1 in rects:
        if np.any((pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)):
            return True
    return False


def lattice_bfs(layout, config, start, target):
    """Plain BFS over the agent's motion lattice using the sampling oracle for moves."""
    from collections import deque

    s = config.step_size
    rects = layout.walls + layout.cover_boxes
    w, h = layout.arena

    def pos(ij):
        return (layout.agent_spawn[0] + s * ij[0], layout.agent_spawn[1] + s * ij[1])

    def free(ij):
        x, y = pos(ij)
        if not (0 < x < w and 0 < y < h):
            return False
        if any(r[0] <= x <= r[2] and r[1] <= y <= r[3] for r in rects):
            return False
        return np.hypot(x - layout.enemy_pos[0], y - layout.enemy_pos[1]) > config.enemy_radius

    def goal(ij):
        x, y = pos(ij)
        return np.hypot(x - target[0], y - target[1]) <= layout.cover_radius

    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if goal(cur):
            return dist[cur]
        for d in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            n = (cur[0] + d[0], cur[1] + d[1])
            if n in dist or not free(n) or sampled_segment_hits(pos(cur), pos(n), rects, spacing=1e-3):
                continue
            dist[n] = dist[cur] + 1
            queue.append(n)
    return None


def exact_supercover(a, b):
    """Cells whose closed unit square meets segment a-b, by exact rational slab tests."""
    from fractions import Fraction

    half = Fraction(1, 2)
    (r0, c0), (r1, c1) = a, b
    out = set()
    for i in range(min(r0, r1), max(r0, r1) + 1):
        for j in range(min(c0, c1), max(c0, c1) + 1):
            lo, hi = Fraction(0), Fraction(1)
            for p0, d, k in ((r0, r1 - r0, i), (c0, c1 - c0, j)):
                if d == 0:
                    if abs(p0 - k) > half:
                        lo, hi = Fraction(1), Fraction(0)
                    continue
                t0, t1 = Fraction(k - p0) / d - half / abs(d), Fraction(k - p0) / d + half / abs(d)
                lo, hi = max(lo, t0), min(hi, t1)
            if lo <= hi:
                out.add((i, j))
    return out


def exact_can_damage(attacker, target, layout, attack_range):
    if max(abs(attacker[0] - target[0]), abs(attacker[1] - target[1])) > attack_range:
        return False
    for cell in exact_supercover(attacker, target):
        if cell in layout.walls:
            return False
        if cell in layout.barricades and abs(cell[0] - attacker[0]) + abs(cell[1] - attacker[1]) != 1:
            return False
    return True


def brute_force_safe_cells(layout, attack_range):
    """Overwatch cells by checking every (reachable blue cell, candidate) pair with the exact oracle."""
    free = layout.free_cells
    reach = layout.blue_reachable
    centre = layout.blue_posts[0]
    out = set()
    for c in free:
        if c == centre or not exact_can_damage(c, centre, layout, attack_range):
            continue
        if all(max(abs(b[0] - c[0]), abs(b[1] - c[1])) <= 1 or not exact_can_damage(b, c, layout, attack_range)
               for b in reach):
            out.add(c)
    return out


def record_criterion(number, title, ok, detail):
    """Store and print a PASS/FAIL line for an acceptance criterion."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok
