"""Batched bidirectional neural planning with replanning and refinement.

MPNet is the special case ``B=1, I_init=1, I_refine=0`` of
:func:`p3net_plan`; see :func:`mpnet_config`.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimMismatch, InvalidEndpoint
from .geometry import (DEFAULT_DELTA, Workspace, path_cost, path_in_collision, point_in_collision,
                       segment_in_collision, smooth)
from .nn.fixed import quantize_model
from .nn.mt19937 import Mt19937

PHASES = ("encode", "initial", "replan", "refine")


@dataclass(frozen=True)
class PlannerConfig:
    B: int = 1
    I: int = 50
    I_init: int = 1
    I_replan: int = 10
    I_refine: int = 0
    delta: float = DEFAULT_DELTA
    seed: int = 0

    def __post_init__(self):
        if self.B < 1 or self.I < 0 or self.I_init < 1 or self.I_replan < 0 or self.I_refine < 0:
            raise ValueError(f"invalid planner counts: {self}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def with_seed(self, seed: int) -> "PlannerConfig":
        return PlannerConfig(**{**asdict(self), "seed": seed})

    def label(self) -> str:
        return f"B={self.B};I={self.I};I_init={self.I_init};I_replan={self.I_replan};I_refine={self.I_refine}"


def mpnet_config(**overrides) -> PlannerConfig:
    return PlannerConfig(**{"B": 1, "I_init": 1, "I_refine": 0, **overrides})


class NeuralModels:
    """Encoder + planner pair, optionally in fixed-point mode.

    The networks work in the unit frame of the workspace; this wrapper
    converts world coordinates in and out.
    """

    def __init__(self, encoder, planner, fixed_point: bool = False):
        if encoder.dim != planner.dim:
            raise DimMismatch("encoder and planner dimensions differ")
        self.dim = encoder.dim
        self.fixed_point = fixed_point
        self.float_encoder = encoder.prepare()
        self.float_planner = planner.prepare()
        if fixed_point:
            self.encoder = quantize_model(encoder)
            self.planner = quantize_model(planner)
        else:
            self.encoder, self.planner = encoder, planner

    def as_fixed_point(self) -> "NeuralModels":
        return NeuralModels(self.float_encoder, self.float_planner, fixed_point=True)

    def encode(self, points, ws: Workspace):
        points = np.asarray(points).reshape(-1, self.dim)
        if len(points) == 0:
            # obstacle-free world: nothing to max over
            dtype = np.int64 if self.fixed_point else self.float_encoder.dtype
            return np.zeros(self.float_encoder.feature_dim, dtype=dtype)
        return self.encoder.encode(ws.to_unit(points))

    def step(self, phi, C, C_goal, ws: Workspace, rng: Mt19937) -> np.ndarray:
        out = self.planner.step(phi, ws.to_unit(C), ws.to_unit(C_goal), rng)
        return ws.from_unit(out)


@dataclass
class Stats:
    pnet_calls: int = 0
    cc_calls: int = 0
    trace: list | None = None

    def log(self, event):
        if self.trace is not None:
            self.trace.append(event)


@dataclass
class PlanResult:
    path: np.ndarray | None
    success: bool
    cost: float | None
    timing: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    pnet_calls: int = 0
    cc_calls: int = 0
    cost_history: list = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return float(sum(self.timing.values()))


class _Ctx:
    """Per-task state: workspace, models, rng and counters."""

    def __init__(self, ws: Workspace, cfg: PlannerConfig, models: NeuralModels, rng: Mt19937,
                 stats: Stats | None = None):
        self.ws, self.cfg, self.models, self.rng = ws, cfg, models, rng
        self.stats = stats or Stats()

    def collides(self, a, b) -> bool:
        self.stats.cc_calls += 1
        hit = segment_in_collision(a, b, self.ws, self.cfg.delta)
        self.stats.log(("cc", bool(hit)))
        return hit

    def connectable(self, a, b) -> bool:
        return not self.collides(a, b)

    def pnet(self, phi, C, G) -> np.ndarray:
        self.stats.pnet_calls += 1
        self.stats.log(("pnet",))
        return self.ws.clamp(self.models.step(phi, C, G, self.ws, self.rng))

    def smooth(self, tau):
        return smooth(tau, self.ws, self.cfg.delta, check=self.collides)

    def path_collides(self, tau) -> bool:
        return path_in_collision(tau, self.ws, self.cfg.delta, check=self.collides)


def _ctx(ws, cfg, models, rng, stats):
    return ws if isinstance(ws, _Ctx) else _Ctx(ws, cfg, models, rng, stats)


def neural_planner_ex(c_s, c_g, phi, ws, cfg: PlannerConfig = None, models: NeuralModels = None,
                      rng: Mt19937 = None, stats: Stats | None = None, shortcut: bool = True):
    """Grow ``B`` forward/backward path pairs until one pair connects.

    Returns the ``(T+1, D)`` waypoint array from ``c_s`` to ``c_g`` or
    ``None`` after ``cfg.I`` iterations. With ``shortcut`` a directly
    connectable ``(c_s, c_g)`` is returned without any inference.
    """
    ctx = _ctx(ws, cfg, models, rng, stats)
    cfg = ctx.cfg
    c_s = np.asarray(c_s, dtype=np.float64)
    c_g = np.asarray(c_g, dtype=np.float64)
    if shortcut and ctx.connectable(c_s, c_g):
        return np.array([c_s, c_g])
    B, D = cfg.B, c_s.size
    # rows (2j, 2j+1) hold the forward / backward endpoints of pair j
    C = np.empty((2 * B, D))
    C[0::2], C[1::2] = c_s, c_g
    G = np.empty((2 * B, D))
    G[0::2], G[1::2] = c_g, c_s
    fwd = [[c_s] for _ in range(B)]
    bwd = [[c_g] for _ in range(B)]
    for _ in range(cfg.I):
        nxt = ctx.pnet(phi, C, G)
        for j in range(B):
            a0, b0 = C[2 * j], C[2 * j + 1]
            a1, b1 = nxt[2 * j], nxt[2 * j + 1]
            if ctx.connectable(a1, b0):
                grow_a, grow_b, done = True, False, True
            elif ctx.connectable(a0, b1):
                grow_a, grow_b, done = False, True, True
            elif ctx.connectable(a1, b1):
                grow_a, grow_b, done = True, True, True
            else:
                grow_a, grow_b, done = True, True, False
            if grow_a:
                fwd[j].append(a1)
            if grow_b:
                bwd[j].append(b1)
            if done:
                return np.array(fwd[j] + bwd[j][::-1])
        C = nxt
    return None


def replan(tau, phi, ws, cfg: PlannerConfig = None, models: NeuralModels = None, rng: Mt19937 = None,
           stats: Stats | None = None):
    """Replace every non-connectable edge with a neural detour; ``None`` if one fails."""
    ctx = _ctx(ws, cfg, models, rng, stats)
    tau = np.asarray(tau, dtype=np.float64)
    out = [tau[0]]
    for i in range(len(tau) - 1):
        if ctx.connectable(tau[i], tau[i + 1]):
            out.append(tau[i + 1])
            continue
        detour = neural_planner_ex(tau[i], tau[i + 1], phi, ctx, shortcut=False)
        if detour is None:
            return None
        out.extend(detour[1:])
    return np.array(out)


def refine(tau, phi, ws, cfg: PlannerConfig = None, models: NeuralModels = None, rng: Mt19937 = None,
           stats: Stats | None = None):
    """Re-plan every edge and splice in the new sub-path when it is collision-free."""
    ctx = _ctx(ws, cfg, models, rng, stats)
    tau = np.asarray(tau, dtype=np.float64)
    out = [tau[0]]
    for i in range(len(tau) - 1):
        sub = neural_planner_ex(tau[i], tau[i + 1], phi, ctx, shortcut=False)
        if sub is not None and not ctx.path_collides(sub):
            out.extend(sub[1:])
        else:
            out.append(tau[i + 1])
    return np.array(out)


def p3net_plan(c_start, c_goal, pc, ws: Workspace, cfg: PlannerConfig, models: NeuralModels,
               trace: list | None = None) -> PlanResult:
    """Full pipeline: encode, initial planning, replanning, refinement."""
    c_start = np.asarray(c_start, dtype=np.float64)
    c_goal = np.asarray(c_goal, dtype=np.float64)
    for name, c in (("start", c_start), ("goal", c_goal)):
        if c.size != ws.dim:
            raise DimMismatch(f"{name} has {c.size} coordinates, workspace is {ws.dim}-D")
        if point_in_collision(c, ws):
            raise InvalidEndpoint(f"{name} {c} is in collision")
    stats = Stats(trace=trace)
    ctx = _Ctx(ws, cfg, models, Mt19937(cfg.seed & 0xFFFFFFFF), stats)
    timing = {p: 0.0 for p in PHASES}

    def result(path, history=()):
        ok = path is not None
        return PlanResult(path=path, success=ok, cost=path_cost(path) if ok else None, timing=timing,
                          pnet_calls=stats.pnet_calls, cc_calls=stats.cc_calls, cost_history=list(history))

    t = time.perf_counter()
    points = getattr(pc, "points", pc)
    phi = models.encode(points, ws)
    timing["encode"] = time.perf_counter() - t

    t = time.perf_counter()
    tau = None
    for _ in range(cfg.I_init):
        tau = neural_planner_ex(c_start, c_goal, phi, ctx)
        if tau is not None:
            break
    if tau is not None:
        tau = ctx.smooth(tau)
    timing["initial"] = time.perf_counter() - t
    if tau is None:
        return result(None)

    t = time.perf_counter()
    feasible = not ctx.path_collides(tau)
    for _ in range(cfg.I_replan if not feasible else 0):
        new = replan(tau, phi, ctx)
        if new is None:
            continue  # keep the previous candidate for the next attempt
        tau = ctx.smooth(new)
        if not ctx.path_collides(tau):
            feasible = True
            break
    timing["replan"] = time.perf_counter() - t
    if not feasible:
        return result(None)

    t = time.perf_counter()
    best, c_best = tau, path_cost(tau)
    history = [c_best]
    for _ in range(cfg.I_refine):
        new = ctx.smooth(refine(best, phi, ctx))
        c_new = path_cost(new)
        if c_new < c_best:
            best, c_best = new, c_new
        history.append(c_best)
    timing["refine"] = time.perf_counter() - t
    return result(best, history)
