"""Points, box obstacles, discretized collision checking, path cost and smoothing.

Points are plain 1-D ``numpy`` arrays of length D (2 or 3); paths are
``(T+1, D)`` arrays. Obstacles are closed axis-aligned boxes, so touching a
face counts as a collision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_DELTA = 0.01


@dataclass(frozen=True, eq=False)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size not in (2, 3):
            raise ValueError(f"bad box corners {lo!r}, {hi!r}")
        if np.any(lo > hi):
            raise ValueError(f"min corner exceeds max corner: {lo} > {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return bool(np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(self.lo <= p) and np.all(p <= self.hi))

    def intersects(self, other: "Aabb") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))


@dataclass(frozen=True)
class Workspace:
    """World bounds plus box obstacles. Immutable; safe to share."""

    bounds: Aabb
    obstacles: tuple = ()
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        obstacles = tuple(self.obstacles)
        for ob in obstacles:
            if ob.dim != self.bounds.dim:
                raise ValueError("obstacle dimension differs from world bounds")
            if not ob.intersects(self.bounds):
                raise ValueError(f"obstacle {ob} lies outside the world")
        object.__setattr__(self, "obstacles", obstacles)
        d = self.bounds.dim
        lo = np.array([o.lo for o in obstacles], dtype=np.float64).reshape(-1, d)
        hi = np.array([o.hi for o in obstacles], dtype=np.float64).reshape(-1, d)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    @property
    def obstacle_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(lo, hi)`` corner matrices of shape ``(N_obs, D)``."""
        return self._lo, self._hi

    def clamp(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(pts, self.bounds.lo, self.bounds.hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.bounds.lo + self.bounds.hi)

    @property
    def half_extent(self) -> float:
        return float(0.5 * np.max(self.bounds.hi - self.bounds.lo))

    def to_unit(self, pts) -> np.ndarray:
        """World coordinates to the network frame (world box mapped into [-1, 1])."""
        return (np.asarray(pts, dtype=np.float64) - self.center) / self.half_extent

    def from_unit(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) * self.half_extent + self.center

    @classmethod
    def from_boxes(cls, lo_world, hi_world, boxes: Sequence[tuple] = ()) -> "Workspace":
        return cls(Aabb(lo_world, hi_world), tuple(Aabb(lo, hi) for lo, hi in boxes))


def point_in_collision(p, ws: Workspace) -> bool:
    if ws.n_obstacles == 0:
        return False
    p = np.asarray(p, dtype=np.float64)
    lo, hi = ws.obstacle_arrays
    return bool(np.any(np.all((lo <= p) & (p <= hi), axis=1)))


def points_in_collision(pts: np.ndarray, ws: Workspace) -> np.ndarray:
    """Vectorised :func:`point_in_collision` over the rows of ``pts``."""
    pts = np.asarray(pts, dtype=np.float64)
    if ws.n_obstacles == 0:
        return np.zeros(len(pts), dtype=bool)
    lo, hi = ws.obstacle_arrays
    inside = (lo[None] <= pts[:, None]) & (pts[:, None] <= hi[None])
    return np.any(np.all(inside, axis=2), axis=1)


def n_samples(a, b, delta: float) -> int:
    """Number of intervals M used to discretize segment ``(a, b)``."""
    dist = float(np.linalg.norm(np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)))
    return int(math.ceil(dist / delta))


def segment_in_collision(a, b, ws: Workspace, delta: float = DEFAULT_DELTA) -> bool:
    """Test ``a + (i/M)(b-a)`` for ``i = 0..M`` with ``M = ceil(|b-a| / delta)``.

    The endpoints are put in lexicographic order first so the tested point set
    does not depend on the direction of the call.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if ws.n_obstacles == 0:
        return False
    if tuple(b) < tuple(a):
        a, b = b, a
    lo, hi = ws.obstacle_arrays
    # Only boxes overlapping the segment's bounding box can contain samples.
    # The margin absorbs interpolation rounding just past an endpoint.
    seg_lo = np.minimum(a, b) - 1e-9
    seg_hi = np.maximum(a, b) + 1e-9
    near = np.all((lo <= seg_hi) & (seg_lo <= hi), axis=1)
    if not near.any():
        return False
    lo, hi = lo[near], hi[near]
    m = n_samples(a, b, delta)
    if m == 0:
        return bool(np.any(np.all((lo <= a) & (a <= hi), axis=1)))
    t = np.arange(m + 1, dtype=np.float64) / m
    pts = a + t[:, None] * (b - a)
    for k in range(len(lo)):
        if np.any(np.all((lo[k] <= pts) & (pts <= hi[k]), axis=1)):
            return True
    return False


def as_path(tau) -> np.ndarray:
    return np.asarray(tau, dtype=np.float64).reshape(len(tau), -1)


def path_in_collision(tau, ws: Workspace, delta: float = DEFAULT_DELTA, check=None) -> bool:
    """True iff any edge collides. ``check(a, b)`` overrides the segment test."""
    tau = as_path(tau)
    if len(tau) < 2:
        raise ValueError("path needs at least two waypoints")
    check = check or (lambda a, b: segment_in_collision(a, b, ws, delta))
    return any(check(tau[i], tau[i + 1]) for i in range(len(tau) - 1))


def path_cost(tau) -> float:
    tau = as_path(tau)
    if len(tau) < 2:
        raise ValueError("path needs at least two waypoints")
    return float(np.linalg.norm(np.diff(tau, axis=0), axis=1).sum())


def dedupe(tau) -> np.ndarray:
    """Drop waypoints equal to their predecessor (zero-length edges)."""
    tau = as_path(tau)
    if len(tau) < 2:
        return tau
    keep = np.ones(len(tau), dtype=bool)
    keep[1:] = np.any(tau[1:] != tau[:-1], axis=1)
    out = tau[keep]
    if len(out) == 1:
        # start == goal: keep a degenerate two-point path
        out = np.vstack([out, out])
    return out


def smooth(tau, ws: Workspace, delta: float = DEFAULT_DELTA, check=None) -> np.ndarray:
    """Greedy shortcutting: from each kept waypoint jump to the farthest
    later waypoint that is directly connectable.

    If no later waypoint is connectable the next one is kept anyway, so a
    colliding input edge survives unchanged.
    """
    tau = dedupe(tau)
    n = len(tau)
    if n <= 2:
        return tau
    check = check or (lambda a, b: segment_in_collision(a, b, ws, delta))
    keep = [0]
    i = 0
    while i < n - 1:
        j = i + 1
        for k in range(n - 1, i + 1, -1):
            if not check(tau[i], tau[k]):
                j = k
                break
        keep.append(j)
        i = j
    return tau[keep]
