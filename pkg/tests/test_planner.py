import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from p3net.errors import DimMismatch, InvalidEndpoint
from p3net.geometry import Workspace, path_cost, path_in_collision, segment_in_collision, smooth
from p3net.nn import EncoderModel, PlannerModel
from p3net.nn.mt19937 import Mt19937
from p3net.planner import (NeuralModels, PlannerConfig, Stats, _Ctx, mpnet_config, neural_planner_ex,
                           p3net_plan, refine, replan)
from p3net.pointcloud import sample_cloud
from oracles import mpnet_transcription, scalar_bidirectional


class DriftModels:
    """Stand-in for the networks: each row drifts toward its goal with rng jitter.

    Consumes the rng the same way for any batch layout (two words per
    coordinate, row-major), which keeps it comparable with the scalar oracle.
    """

    dim = 2

    def __init__(self, rate=0.35, jitter=3.0):
        self.rate, self.jitter = rate, jitter

    def encode(self, points, ws):
        return np.zeros(4)

    def step(self, phi, C, G, ws, rng):
        C = np.asarray(C, dtype=np.float64)
        G = np.asarray(G, dtype=np.float64)
        w = rng.words(C.size).reshape(C.shape).astype(np.float64)
        noise = (w / 2.0**32 - 0.5) * 2 * self.jitter
        return C + self.rate * (G - C) + noise


def wall_ws():
    # a wall with a gap near the top and a block in the lower half
    return Workspace.from_boxes([0, 0], [40, 40], [([18, 0], [22, 30]), ([5, 5], [10, 10])])


@pytest.fixture(scope="module")
def real_models():
    enc = EncoderModel(2, seed=1)
    return NeuralModels(enc, PlannerModel(2, seed=2))


def pair_fn(models, ws, rng):
    def next_pair(a, b, s, g):
        out = ws.clamp(models.step(np.zeros(4), np.array([a, b]), np.array([g, s]), ws, rng))
        return list(out[0]), list(out[1])
    return next_pair


class TestNeuralPlannerEx:
    def test_direct_connection(self):
        ws = Workspace.from_boxes([0, 0], [40, 40])
        cfg = PlannerConfig(B=2, I=5)
        stats = Stats()
        tau = neural_planner_ex([1, 1], [30, 20], None, ws, cfg, DriftModels(), Mt19937(1), stats)
        np.testing.assert_array_equal(tau, [[1, 1], [30, 20]])
        assert stats.pnet_calls == 0 and stats.cc_calls == 1

    def test_first_candidate_wins_in_free_space(self):
        ws = Workspace.from_boxes([0, 0], [40, 40])
        cfg = PlannerConfig(B=1, I=5)
        models, rng = DriftModels(), Mt19937(3)
        expect = ws.clamp(models.step(None, [[1, 1], [30, 20]], [[30, 20], [1, 1]], ws, Mt19937(3)))
        tau = neural_planner_ex([1, 1], [30, 20], None, ws, cfg, models, rng, shortcut=False)
        # (a1, b0) is connectable, so the forward path grows by one point
        np.testing.assert_array_equal(tau, [[1, 1], expect[0], [30, 20]])

    def test_zero_iterations_fail(self):
        cfg = PlannerConfig(B=4, I=0)
        assert neural_planner_ex([2, 20], [38, 20], None, wall_ws(), cfg, DriftModels(), Mt19937(1)) is None

    @pytest.mark.parametrize("seed", range(12))
    def test_b1_matches_scalar_oracle(self, seed):
        ws = wall_ws()
        cfg = PlannerConfig(B=1, I=30)
        s, g = np.array([2.0, 20.0]), np.array([38.0, 12.0])
        models = DriftModels(rate=0.2, jitter=4.0)
        rng_a, rng_b = Mt19937(seed), Mt19937(seed)
        got = neural_planner_ex(s, g, None, ws, cfg, models, rng_a, shortcut=False)

        def connectable(p, q):
            return not segment_in_collision(p, q, ws, cfg.delta)
        ref, _ = scalar_bidirectional(list(s), list(g), pair_fn(models, ws, rng_b), connectable, cfg.I)
        if ref is None:
            assert got is None
        else:
            np.testing.assert_array_equal(got, np.array(ref))
        assert rng_a.getstate()[1] == rng_b.getstate()[1]
        np.testing.assert_array_equal(rng_a.getstate()[0], rng_b.getstate()[0])

    def test_b1_matches_scalar_oracle_with_real_networks(self, real_models):
        ws = wall_ws()
        cfg = PlannerConfig(B=1, I=15)
        phi = np.random.default_rng(0).random(252).astype(np.float32)
        rng_a, rng_b = Mt19937(4), Mt19937(4)
        s, g = np.array([2.0, 20.0]), np.array([38.0, 12.0])
        got = neural_planner_ex(s, g, phi, ws, cfg, real_models, rng_a, shortcut=False)

        def next_pair(a, b, cs, cg):
            out = ws.clamp(real_models.step(phi, np.array([a, b]), np.array([cg, cs]), ws, rng_b))
            return list(out[0]), list(out[1])
        ref, _ = scalar_bidirectional(list(s), list(g), next_pair,
                                      lambda p, q: not segment_in_collision(p, q, ws), cfg.I)
        assert (got is None) == (ref is None)
        if ref is not None:
            np.testing.assert_array_equal(got, np.array(ref))
        np.testing.assert_array_equal(rng_a.getstate()[0], rng_b.getstate()[0])

    def test_batched_result_is_a_valid_connection(self):
        ws = wall_ws()
        for seed in range(10):
            cfg = PlannerConfig(B=4, I=40)
            tau = neural_planner_ex([2, 20], [38, 12], None, ws, cfg, DriftModels(0.2, 4.0), Mt19937(seed),
                                    shortcut=False)
            if tau is None:
                continue
            np.testing.assert_array_equal(tau[0], [2, 20])
            np.testing.assert_array_equal(tau[-1], [38, 12])
            # the joining edge is one of the tested connections, so at least one
            # edge is collision-free and every point lies inside the world
            assert np.all((tau >= 0) & (tau <= 40))


class TestReplan:
    def test_feasible_path_unchanged(self):
        ws = wall_ws()
        tau = np.array([[2.0, 35.0], [20.0, 35.0], [38.0, 35.0]])
        out = replan(tau, None, ws, PlannerConfig(I=0), DriftModels(), Mt19937(1))
        np.testing.assert_array_equal(out, tau)

    def test_blocked_edge_with_no_iterations_fails(self):
        tau = np.array([[2.0, 20.0], [38.0, 20.0]])
        assert replan(tau, None, wall_ws(), PlannerConfig(I=0), DriftModels(), Mt19937(1)) is None

    def test_detour_is_spliced(self):
        ws = wall_ws()
        tau = np.array([[2.0, 35.0], [15.0, 20.0], [30.0, 20.0]])
        for seed in range(20):
            out = replan(tau, None, ws, PlannerConfig(I=40), DriftModels(0.2, 5.0), Mt19937(seed))
            if out is not None:
                break
        assert out is not None
        np.testing.assert_array_equal(out[:2], tau[:2])
        np.testing.assert_array_equal(out[-1], tau[-1])
        assert len(out) > 3


class TestRefine:
    def test_no_iterations_returns_input(self):
        tau = np.array([[2.0, 35.0], [20.0, 35.0], [38.0, 35.0]])
        out = refine(tau, None, wall_ws(), PlannerConfig(I=0), DriftModels(), Mt19937(1))
        np.testing.assert_array_equal(out, tau)

    def test_straight_subpaths_keep_input(self):
        # with rate 1 and no jitter every prediction is the goal itself
        ws = Workspace.from_boxes([0, 0], [40, 40])
        tau = np.array([[1.0, 1.0], [30.0, 20.0]])
        out = refine(tau, None, ws, PlannerConfig(I=5), DriftModels(rate=1.0, jitter=0.0), Mt19937(1))
        np.testing.assert_array_equal(smooth(out, ws), tau)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 6))
    def test_output_collision_free(self, seed, n):
        ws = Workspace.from_boxes([0, 0], [40, 40], [([15, 15], [25, 25])])
        rng = np.random.default_rng(seed)
        # a collision-free zig-zag along the border region
        pts = [[2.0, 2.0]] + [[float(x), 2.0 + 3 * (i % 2)] for i, x in
                              enumerate(sorted(rng.uniform(3, 38, n - 2)))] + [[38.0, 3.0]]
        tau = np.array(pts)
        assert not path_in_collision(tau, ws)
        out = refine(tau, None, ws, PlannerConfig(B=2, I=10), DriftModels(0.3, 6.0), Mt19937(seed))
        assert not path_in_collision(out, ws)
        np.testing.assert_array_equal(out[0], tau[0])
        np.testing.assert_array_equal(out[-1], tau[-1])


class TestP3NetPlan:
    def test_empty_workspace_straight_line(self, real_models):
        ws = Workspace.from_boxes([0, 0], [40, 40])
        res = p3net_plan([1, 2], [33, 30], np.zeros((0, 2)), ws, PlannerConfig(B=4, I_init=5), real_models)
        assert res.success
        np.testing.assert_array_equal(res.path, [[1, 2], [33, 30]])
        assert res.cost == pytest.approx(np.hypot(32, 28))

    def test_invalid_endpoints(self, real_models):
        ws = wall_ws()
        cloud = sample_cloud(ws, 100)
        with pytest.raises(InvalidEndpoint):
            p3net_plan([20, 10], [38, 12], cloud, ws, PlannerConfig(), real_models)
        with pytest.raises(DimMismatch):
            p3net_plan([2, 2, 2], [38, 12, 1], cloud, ws, PlannerConfig(), real_models)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PlannerConfig(B=0)
        with pytest.raises(ValueError):
            PlannerConfig(I_init=0)
        with pytest.raises(ValueError):
            PlannerConfig(delta=0)
        assert mpnet_config(I_replan=20) == PlannerConfig(B=1, I_init=1, I_refine=0, I_replan=20)

    @pytest.mark.parametrize("seed", range(8))
    def test_success_invariants_and_refinement(self, seed):
        ws = wall_ws()
        cfg = PlannerConfig(B=4, I=40, I_init=3, I_replan=10, I_refine=4, seed=seed)
        res = p3net_plan([2, 20], [38, 12], np.zeros((1, 2)), ws, cfg, DriftModels(0.2, 5.0))
        if not res.success:
            return
        np.testing.assert_array_equal(res.path[0], [2, 20])
        np.testing.assert_array_equal(res.path[-1], [38, 12])
        assert not path_in_collision(res.path, ws)
        np.testing.assert_array_equal(smooth(res.path, ws), res.path)
        h = res.cost_history
        assert len(h) == cfg.I_refine + 1
        assert all(b <= a for a, b in zip(h, h[1:]))
        assert res.cost == pytest.approx(path_cost(res.path)) and res.cost == h[-1]

    def test_deterministic(self, real_models):
        ws = wall_ws()
        cloud = sample_cloud(ws, 200, seed=1)
        cfg = PlannerConfig(B=2, I=10, I_init=2, I_replan=2, I_refine=1, seed=11)
        a = p3net_plan([2, 20], [38, 12], cloud, ws, cfg, real_models)
        b = p3net_plan([2, 20], [38, 12], cloud, ws, cfg, real_models)
        assert (a.success, a.cost, a.pnet_calls, a.cc_calls) == (b.success, b.cost, b.pnet_calls, b.cc_calls)
        if a.success:
            np.testing.assert_array_equal(a.path, b.path)

    @pytest.mark.parametrize("seed", range(25))
    def test_mpnet_case_follows_transcription_trace(self, seed):
        ws = wall_ws()
        cfg = mpnet_config(I=12, I_replan=6, seed=seed)
        models = DriftModels(0.25, 6.0)
        s, g = [2.0, 20.0], [38.0, 12.0]
        trace = []
        res = p3net_plan(s, g, np.zeros((1, 2)), ws, cfg, models, trace=trace)

        ref_trace = []
        rng = Mt19937(seed)
        step = pair_fn(models, ws, rng)

        def next_pair(a, b, cs, cg):
            ref_trace.append(("pnet",))
            return step(a, b, cs, cg)

        def collides(p, q):
            hit = segment_in_collision(p, q, ws, cfg.delta)
            ref_trace.append(("cc", bool(hit)))
            return hit
        ref = mpnet_transcription(s, g, next_pair, collides, cfg.I, cfg.I_replan)
        assert trace == ref_trace
        assert res.success == (ref is not None)
        if ref is not None:
            np.testing.assert_array_equal(res.path, np.array(ref))

    def test_fixed_point_models_plan(self, real_models):
        ws = Workspace.from_boxes([0, 0], [40, 40], [([18, 0], [22, 30])])
        cloud = sample_cloud(ws, 300, seed=2)
        fx = real_models.as_fixed_point()
        cfg = PlannerConfig(B=2, I=5, I_init=1, I_replan=1, seed=3)
        res = p3net_plan([2, 35], [38, 35], cloud, ws, cfg, fx)
        assert res.success  # directly connectable above the wall
        phi = fx.encode(cloud.points, ws)
        assert phi.dtype == np.int64


def test_ctx_counts_checks():
    ws = wall_ws()
    ctx = _Ctx(ws, PlannerConfig(), DriftModels(), Mt19937(1))
    ctx.collides([0, 0], [1, 1])
    ctx.path_collides(np.array([[0, 0], [1, 1], [2, 2]]))
    assert ctx.stats.cc_calls == 3
