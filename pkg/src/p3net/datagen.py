"""Workspace / task / dataset generation and the on-disk dataset layout.

A dataset directory holds ``manifest.json`` plus one ``P3PC`` cloud file per
workspace and one ``P3GT`` ground-truth file per task.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, GroundTruthFailed, TaskGenExhausted
from .geometry import (DEFAULT_DELTA, Aabb, Workspace, path_in_collision, point_in_collision,
                       segment_in_collision)
from .nn.train import TrainingSet
from .pointcloud import DEFAULT_CLOUD_SIZE, PointCloud, cloud_read, cloud_write, read_array_file, \
    sample_cloud, write_array_file
from .rrt import ground_truth
from .seeding import derive_seed

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
GT_MAGIC = b"P3GT"
SPLITS = ("train", "seen", "unseen")
DESK_GT_ITERS = 3000

_WS_TRAIN, _WS_UNSEEN, _CLOUD, _TASK, _GT = 1, 2, 3, 4, 5


def _round32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


@dataclass(frozen=True)
class WorkspaceRecipe:
    dim: int = 2
    world_side: float = 40.0
    hard_mode: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.world_side <= 10:
            raise ValueError("world_side too small for the obstacle extents")

    @property
    def n_obstacles(self) -> int:
        base = 7 if self.dim == 2 else 10
        return 2 * base if self.hard_mode else base


def gen_workspace(recipe: WorkspaceRecipe, seed: int) -> Workspace:
    """Random boxes fully inside ``[0, world_side]^D``.

    2D: squares of side 5. 3D: each axis extent drawn from {5, 10}.
    """
    rng = np.random.default_rng(seed)
    side = recipe.world_side
    boxes = []
    for _ in range(recipe.n_obstacles):
        if recipe.dim == 2:
            ext = np.full(2, 5.0)
        else:
            ext = rng.choice([5.0, 10.0], size=3)
        lo = rng.random(recipe.dim) * (side - ext)
        boxes.append((lo, lo + ext))
    return Workspace.from_boxes(np.zeros(recipe.dim), np.full(recipe.dim, side), boxes)


@dataclass
class PlanningTask:
    id: int
    workspace: int
    start: np.ndarray
    goal: np.ndarray
    split: str = "train"
    ground_truth: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, PlanningTask):
            return NotImplemented
        same_gt = (self.ground_truth is None and other.ground_truth is None) or (
            self.ground_truth is not None and other.ground_truth is not None
            and np.array_equal(self.ground_truth, other.ground_truth))
        return (self.id, self.workspace, self.split) == (other.id, other.workspace, other.split) and \
            np.array_equal(self.start, other.start) and np.array_equal(self.goal, other.goal) and same_gt


def gen_task(ws: Workspace, seed: int, delta: float = DEFAULT_DELTA, max_tries: int = 10000,
             with_ground_truth: bool = False, gt_iters: int = DESK_GT_ITERS, task_id: int = 0,
             workspace_id: int = 0, split: str = "train") -> PlanningTask:
    """Rejection-sample a non-trivial task (endpoints free, straight line blocked)."""
    rng = np.random.default_rng(seed)
    lo, hi = ws.bounds.lo, ws.bounds.hi
    for _ in range(max_tries):
        # endpoints are binary32-representable so stored files round-trip exactly
        s = _round32(lo + rng.random(ws.dim) * (hi - lo))
        g = _round32(lo + rng.random(ws.dim) * (hi - lo))
        if point_in_collision(s, ws) or point_in_collision(g, ws):
            continue
        if not segment_in_collision(s, g, ws, delta):
            continue
        task = PlanningTask(task_id, workspace_id, s, g, split)
        if with_ground_truth:
            gt = ground_truth(s, g, ws, delta, seed=derive_seed(seed, _GT), iters=gt_iters)
            gt = gt.astype(np.float32).astype(np.float64)  # as stored on disk
            if path_in_collision(gt, ws, delta):
                raise GroundTruthFailed("ground truth collides after binary32 rounding")
            task.ground_truth = gt
        return task
    raise TaskGenExhausted(f"no non-trivial task found after {max_tries} tries")


@dataclass
class WorkspaceEntry:
    id: int
    split: str
    workspace: Workspace
    cloud: PointCloud
    seed: int


@dataclass
class Dataset:
    recipe: WorkspaceRecipe
    params: dict
    workspaces: list = field(default_factory=list)
    tasks: list = field(default_factory=list)

    def split_tasks(self, split: str) -> list:
        return [t for t in self.tasks if t.split == split]

    def workspace(self, wid: int) -> WorkspaceEntry:
        return self.workspaces[wid]

    def task(self, tid: int) -> PlanningTask:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise KeyError(f"unknown task id {tid}")


def build_dataset(recipe: WorkspaceRecipe, n_workspaces: int = 10, tasks_per_ws: int = 100,
                  seen_tasks_per_ws: int = 20, n_unseen_ws: int = 3, unseen_tasks_per_ws: int = 20,
                  seed: int = 0, delta: float = DEFAULT_DELTA, gt_iters: int = DESK_GT_ITERS,
                  cloud_size: int | None = None, splits=SPLITS) -> Dataset:
    """Generate workspaces, clouds and tasks with ground truth.

    ``seen`` tasks reuse the training workspaces; ``unseen`` tasks get fresh
    workspaces. Tasks whose generation or ground truth fails are skipped.
    """
    if n_workspaces <= 0 or tasks_per_ws <= 0:
        raise ValueError("workspace and task counts must be positive")
    cloud_size = cloud_size or DEFAULT_CLOUD_SIZE[recipe.dim]
    params = dict(n_workspaces=n_workspaces, tasks_per_ws=tasks_per_ws, seen_tasks_per_ws=seen_tasks_per_ws,
                  n_unseen_ws=n_unseen_ws, unseen_tasks_per_ws=unseen_tasks_per_ws, seed=seed, delta=delta,
                  gt_iters=gt_iters, cloud_size=cloud_size)
    ds = Dataset(recipe, params)

    def add_workspace(split, ws_seed):
        ws = gen_workspace(recipe, ws_seed)
        wid = len(ds.workspaces)
        cloud = sample_cloud(ws, cloud_size, derive_seed(seed, _CLOUD, wid))
        ds.workspaces.append(WorkspaceEntry(wid, split, ws, cloud, ws_seed))
        return wid

    train_ids = [add_workspace("train", derive_seed(seed, _WS_TRAIN, i)) for i in range(n_workspaces)]
    unseen_ids = []
    if "unseen" in splits:
        unseen_ids = [add_workspace("unseen", derive_seed(seed, _WS_UNSEEN, i)) for i in range(n_unseen_ws)]

    plan = []
    if "train" in splits:
        plan += [("train", w, tasks_per_ws) for w in train_ids]
    if "seen" in splits:
        plan += [("seen", w, seen_tasks_per_ws) for w in train_ids]
    plan += [("unseen", w, unseen_tasks_per_ws) for w in unseen_ids]
    split_code = {s: i for i, s in enumerate(SPLITS)}
    for split, wid, count in plan:
        ws = ds.workspaces[wid].workspace
        for k in range(count):
            tseed = derive_seed(seed, _TASK, wid, split_code[split], k)
            try:
                task = gen_task(ws, tseed, delta, with_ground_truth=True, gt_iters=gt_iters,
                                task_id=len(ds.tasks), workspace_id=wid, split=split)
            except (TaskGenExhausted, GroundTruthFailed) as exc:
                log.warning("skipping %s task %d of workspace %d: %s", split, k, wid, exc)
                continue
            ds.tasks.append(task)
    return ds


def training_set(ds: Dataset, split: str = "train", augment: bool = True) -> TrainingSet:
    """Tuples from consecutive ground-truth waypoints, in the network frame.

    With ``augment`` every path also contributes its reversed tuples.
    """
    clouds = []
    for entry in ds.workspaces:
        clouds.append(entry.workspace.to_unit(entry.cloud.points).astype(np.float32))
    idx, cur, goal, nxt = [], [], [], []
    for t in ds.split_tasks(split):
        if t.ground_truth is None:
            continue
        ws = ds.workspaces[t.workspace].workspace
        paths = [t.ground_truth, t.ground_truth[::-1]] if augment else [t.ground_truth]
        for p in paths:
            u = ws.to_unit(p)
            for k in range(len(p) - 1):
                idx.append(t.workspace)
                cur.append(u[k])
                goal.append(u[-1])
                nxt.append(u[k + 1])
    d = ds.recipe.dim
    return TrainingSet(clouds, np.array(idx, dtype=np.int64), np.array(cur).reshape(-1, d),
                       np.array(goal).reshape(-1, d), np.array(nxt).reshape(-1, d))


def _ws_json(ws: Workspace) -> dict:
    return {
        "bounds": [ws.bounds.lo.tolist(), ws.bounds.hi.tolist()],
        "obstacles": [[o.lo.tolist(), o.hi.tolist()] for o in ws.obstacles],
    }


def dataset_write(ds: Dataset, root) -> Path:
    root = Path(root)
    (root / "clouds").mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(parents=True, exist_ok=True)
    workspaces = []
    for e in ds.workspaces:
        rel = f"clouds/ws_{e.id:04d}.p3pc"
        cloud_write(e.cloud, root / rel)
        workspaces.append({"id": e.id, "split": e.split, "seed": e.seed, "cloud": rel, **_ws_json(e.workspace)})
    tasks = []
    for t in ds.tasks:
        rel = None
        if t.ground_truth is not None:
            rel = f"gt/task_{t.id:05d}.p3gt"
            write_array_file(root / rel, GT_MAGIC, t.ground_truth)
        tasks.append({"id": t.id, "split": t.split, "workspace": t.workspace, "start": t.start.tolist(),
                      "goal": t.goal.tolist(), "ground_truth": rel})
    splits = {}
    for s in SPLITS:
        ts = [t.id for t in ds.tasks if t.split == s]
        ws_ids = sorted({t.workspace for t in ds.tasks if t.split == s})
        splits[s] = {"workspaces": ws_ids, "tasks": ts}
    manifest = {"version": MANIFEST_VERSION, "recipe": asdict(ds.recipe), "params": ds.params,
                "splits": splits, "workspaces": workspaces, "tasks": tasks}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return root


def dataset_read(root) -> Dataset:
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise FormatError(f"{root}: no manifest.json") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root}/manifest.json: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{root}: unsupported manifest version {manifest.get('version')}")
    try:
        ds = Dataset(WorkspaceRecipe(**manifest["recipe"]), manifest["params"])
        for w in manifest["workspaces"]:
            path = root / w["cloud"]
            if not path.is_file():
                raise FormatError(f"{root}: missing cloud file {w['cloud']}")
            ws = Workspace(Aabb(*w["bounds"]), tuple(Aabb(lo, hi) for lo, hi in w["obstacles"]))
            ds.workspaces.append(WorkspaceEntry(w["id"], w["split"], ws, cloud_read(path), w["seed"]))
        for t in manifest["tasks"]:
            gt = None
            if t["ground_truth"] is not None:
                path = root / t["ground_truth"]
                if not path.is_file():
                    raise FormatError(f"{root}: missing ground-truth file {t['ground_truth']}")
                gt = read_array_file(path, GT_MAGIC).astype(np.float64)
            ds.tasks.append(PlanningTask(t["id"], t["workspace"], np.array(t["start"], dtype=np.float64),
                                         np.array(t["goal"], dtype=np.float64), t["split"], gt))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{root}/manifest.json: malformed ({exc})") from exc
    return ds
