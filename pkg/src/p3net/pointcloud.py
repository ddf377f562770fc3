"""Obstacle point clouds: volume sampling and the ``P3PC`` binary format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NoObstacles
from .geometry import Workspace

CLOUD_MAGIC = b"P3PC"
CLOUD_VERSION = 1
DEFAULT_CLOUD_SIZE = {2: 1400, 3: 2000}

_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``(N, D)`` float32 samples of the obstacle region."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3) or len(pts) == 0:
            raise ValueError(f"point cloud must be (N>0, 2|3), got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and self.points.tobytes() == other.points.tobytes()


def _inward_f32(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Cast to float32 and nudge any value that rounded outside ``[lo, hi]``."""
    y = x.astype(np.float32)
    below = y.astype(np.float64) < lo
    while below.any():
        y[below] = np.nextafter(y[below], np.float32(np.inf))
        below = y.astype(np.float64) < lo
    above = y.astype(np.float64) > hi
    while above.any():
        y[above] = np.nextafter(y[above], np.float32(-np.inf))
        above = y.astype(np.float64) > hi
    return y


def sample_cloud(ws: Workspace, n: int | None = None, seed: int = 0) -> PointCloud:
    """Sample ``n`` points uniformly over the obstacle boxes.

    A box is picked with probability proportional to its volume, then a point
    is drawn uniformly inside it. Overlaps are not corrected for.
    """
    if ws.n_obstacles == 0:
        raise NoObstacles("cannot sample a cloud from a workspace without obstacles")
    if n is None:
        n = DEFAULT_CLOUD_SIZE[ws.dim]
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = ws.obstacle_arrays
    vol = np.prod(hi - lo, axis=1)
    if vol.sum() > 0:
        probs = vol / vol.sum()
    else:
        probs = np.full(len(vol), 1.0 / len(vol))
    which = rng.choice(len(vol), size=n, p=probs)
    u = rng.random((n, ws.dim))
    pts = lo[which] + u * (hi[which] - lo[which])
    return PointCloud(_inward_f32(pts, lo[which], hi[which]))


def write_array_file(path, magic: bytes, pts: np.ndarray) -> None:
    pts = np.ascontiguousarray(pts, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(magic, CLOUD_VERSION, pts.shape[1], pts.shape[0]))
        f.write(pts.tobytes())


def read_array_file(path, magic: bytes) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    got_magic, version, dim, count = _HEADER.unpack_from(data)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != CLOUD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim not in (2, 3):
        raise FormatError(f"{path}: bad dimension {dim}")
    expect = _HEADER.size + 4 * dim * count
    if len(data) != expect:
        raise FormatError(f"{path}: expected {expect} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=dim * count)
    return arr.reshape(count, dim).astype(np.float32)


def cloud_write(pc: PointCloud, path) -> None:
    write_array_file(path, CLOUD_MAGIC, pc.points)


def cloud_read(path) -> PointCloud:
    pts = read_array_file(path, CLOUD_MAGIC)
    if len(pts) == 0:
        raise FormatError(f"{path}: empty point cloud")
    return PointCloud(pts)
