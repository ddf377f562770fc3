"""RRT* and Informed-RRT* baselines, plus ground-truth path generation."""
from __future__ import annotations

import math
import time

import numpy as np
from scipy.spatial import cKDTree

from .errors import GroundTruthFailed, InvalidEndpoint
from .geometry import DEFAULT_DELTA, Workspace, point_in_collision, segment_in_collision, smooth
from .planner import PHASES, PlanResult

GT_ITERS = 20000
_REBUILD = 256


class NodeIndex:
    """Static k-d tree over older nodes plus a brute-force buffer of recent ones."""

    def __init__(self, points: np.ndarray):
        self.points = points  # shared, grows in place
        self.tree = None
        self.n_tree = 0
        self.n = 0

    def add(self) -> None:
        self.n += 1
        if self.n - self.n_tree > _REBUILD:
            self.tree = cKDTree(self.points[:self.n])
            self.n_tree = self.n

    def nearest(self, x: np.ndarray) -> int:
        best_i, best_d = -1, math.inf
        if self.tree is not None:
            d, i = self.tree.query(x)
            best_i, best_d = int(i), float(d)
        if self.n > self.n_tree:
            buf = self.points[self.n_tree:self.n]
            d = np.sqrt(((buf - x) ** 2).sum(axis=1))
            k = int(np.argmin(d))
            if d[k] < best_d:
                best_i = self.n_tree + k
        return best_i

    def near(self, x: np.ndarray, r: float) -> np.ndarray:
        out = []
        if self.tree is not None:
            out = self.tree.query_ball_point(x, r)
        out = np.asarray(sorted(out), dtype=np.int64)
        if self.n > self.n_tree:
            buf = self.points[self.n_tree:self.n]
            d2 = ((buf - x) ** 2).sum(axis=1)
            out = np.concatenate([out, self.n_tree + np.flatnonzero(d2 <= r * r)])
        return out


class Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        d = root.size
        self.nodes = np.empty((capacity + 1, d))
        self.parent = np.full(capacity + 1, -1, dtype=np.int64)
        self.cost = np.zeros(capacity + 1)
        self.children: list[list[int]] = []
        self.index = NodeIndex(self.nodes)
        self.n = 0
        self.add(root, -1, 0.0)

    def add(self, x, parent: int, cost: float) -> int:
        i = self.n
        self.nodes[i] = x
        self.parent[i] = parent
        self.cost[i] = cost
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        self.index.add()
        return i

    def reparent(self, i: int, new_parent: int, new_cost: float) -> None:
        self.children[self.parent[i]].remove(i)
        self.parent[i] = new_parent
        self.children[new_parent].append(i)
        delta = new_cost - self.cost[i]
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] += delta
            stack.extend(self.children[k])

    def path_to(self, i: int) -> np.ndarray:
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return np.array(out[::-1])


def default_gamma(ws: Workspace) -> float:
    """Rewiring-radius constant: half the world side."""
    return float(0.5 * np.max(ws.bounds.hi - ws.bounds.lo))


class InformedSampler:
    """Uniform samples from the prolate hyperspheroid with foci start/goal."""

    def __init__(self, start: np.ndarray, goal: np.ndarray):
        self.start, self.goal = start, goal
        self.c_min = float(np.linalg.norm(goal - start))
        self.center = 0.5 * (start + goal)
        d = start.size
        a1 = (goal - start) / self.c_min if self.c_min > 0 else np.eye(d)[0]
        U, _, Vt = np.linalg.svd(np.outer(a1, np.eye(d)[0]))
        fix = np.ones(d)
        fix[-1] = np.linalg.det(U) * np.linalg.det(Vt)
        self.rotation = U @ np.diag(fix) @ Vt

    def sample(self, c_best: float, rng: np.random.Generator, ws: Workspace) -> np.ndarray:
        d = self.start.size
        r1 = c_best / 2
        ri = math.sqrt(max(c_best**2 - self.c_min**2, 0.0)) / 2
        L = np.diag([r1] + [ri] * (d - 1))
        while True:
            v = rng.standard_normal(d)
            v *= rng.random() ** (1 / d) / np.linalg.norm(v)
            x = self.rotation @ L @ v + self.center
            inside = np.all(ws.bounds.lo <= x) and np.all(x <= ws.bounds.hi)
            # rounding can push a boundary sample a hair outside the ellipse
            if inside and np.linalg.norm(x - self.start) + np.linalg.norm(x - self.goal) <= c_best:
                return x


def rrt_star(c_start, c_goal, ws: Workspace, iters: int, step: float = 1.0, goal_bias: float = 0.05,
             delta: float = DEFAULT_DELTA, seed: int = 0, informed: bool = False, gamma: float | None = None,
             on_sample=None, on_iter=None) -> PlanResult:
    """RRT* (or Informed-RRT* with ``informed``); returns the best goal-reaching path.

    ``on_sample(x, informed_draw)`` sees every sample; ``on_iter(tree, c_best)``
    runs after every iteration.
    """
    start = np.asarray(c_start, dtype=np.float64)
    goal = np.asarray(c_goal, dtype=np.float64)
    for name, c in (("start", start), ("goal", goal)):
        if point_in_collision(c, ws):
            raise InvalidEndpoint(f"{name} {c} is in collision")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    gamma = default_gamma(ws) if gamma is None else gamma
    d = ws.dim
    lo, hi = ws.bounds.lo, ws.bounds.hi
    tree = Tree(start, iters)
    sampler = InformedSampler(start, goal) if informed else None
    goal_links: list[int] = []
    goal_gap: list[float] = []
    c_best, best_node = math.inf, -1
    cc = 0
    history = []

    def free(a, b):
        nonlocal cc
        cc += 1
        return not segment_in_collision(a, b, ws, delta)

    for _ in range(iters):
        use_informed = sampler is not None and c_best < math.inf
        if rng.random() < goal_bias:
            x_rand = goal.copy()
        elif use_informed:
            x_rand = sampler.sample(c_best, rng, ws)
        else:
            x_rand = lo + rng.random(d) * (hi - lo)
        if on_sample is not None:
            on_sample(x_rand, use_informed)

        i_near = tree.index.nearest(x_rand)
        x_near = tree.nodes[i_near]
        dist = math.dist(x_rand, x_near)
        x_new = x_rand if dist <= step else x_near + (x_rand - x_near) * (step / dist)
        if dist == 0.0 or not free(x_near, x_new):
            history.append(c_best)
            if on_iter is not None:
                on_iter(tree, c_best)
            continue

        n = tree.n + 1
        r = min(gamma * (math.log(n) / n) ** (1.0 / d), step)
        near = tree.index.near(x_new, r)
        if i_near not in near:
            near = np.append(near, i_near)
        dists = np.linalg.norm(tree.nodes[near] - x_new, axis=1)
        cand = tree.cost[near] + dists
        parent, new_cost = -1, math.inf
        for k in np.argsort(cand, kind="stable"):
            if near[k] == i_near or free(tree.nodes[near[k]], x_new):
                parent, new_cost = int(near[k]), float(cand[k])
                break
        i_new = tree.add(x_new, parent, new_cost)

        for k, dk in zip(near, dists):
            k = int(k)
            if k == parent:
                continue
            if new_cost + dk < tree.cost[k] and free(x_new, tree.nodes[k]):
                tree.reparent(k, i_new, new_cost + dk)

        d_goal = math.dist(goal, x_new)
        if d_goal <= step and free(x_new, goal):
            goal_links.append(i_new)
            goal_gap.append(d_goal)
        if goal_links:
            totals = tree.cost[goal_links] + goal_gap
            k = int(np.argmin(totals))
            c_best, best_node = float(totals[k]), goal_links[k]
        history.append(c_best)
        if on_iter is not None:
            on_iter(tree, c_best)

    timing = {p: 0.0 for p in PHASES}
    timing["initial"] = time.perf_counter() - t0
    if best_node < 0:
        return PlanResult(None, False, None, timing, 0, cc, history)
    path = tree.path_to(best_node)
    if np.any(path[-1] != goal):
        path = np.vstack([path, goal])
    return PlanResult(path, True, float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum()),
                      timing, 0, cc, history)


def informed_rrt_star(c_start, c_goal, ws: Workspace, iters: int, **kwargs) -> PlanResult:
    return rrt_star(c_start, c_goal, ws, iters, informed=True, **kwargs)


def ground_truth(c_start, c_goal, ws: Workspace, delta: float = DEFAULT_DELTA, seed: int = 0,
                 iters: int = GT_ITERS) -> np.ndarray:
    """Long-budget RRT* followed by smoothing."""
    res = rrt_star(c_start, c_goal, ws, iters, delta=delta, seed=seed)
    if not res.success:
        raise GroundTruthFailed(f"no path from {c_start} to {c_goal} within {iters} iterations")
    return smooth(res.path, ws, delta)
