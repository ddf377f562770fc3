import numpy as np
import pytest

from p3net.errors import DimMismatch, NoForwardState
from p3net.nn import EncoderModel, PlannerModel, encode, plan_step
from p3net.nn.mt19937 import Mt19937


@pytest.fixture(scope="module")
def enc2():
    return EncoderModel(2, seed=3).prepare()


@pytest.fixture(scope="module")
def pnet2():
    return PlannerModel(2, seed=4)


class TestParameterCounts:
    def test_encoder_2d_plan(self, enc2):
        widths = [fc.W.shape for fc, _ in enc2.blocks]
        assert widths == [(2, 64), (64, 64), (64, 64), (64, 128), (128, 252)]
        assert enc2.feature_dim == 252
        # FC weights + bias, BN gamma + beta per block
        expected = sum(m * n + n + 2 * n for m, n in widths)
        assert enc2.n_params() == expected == 50_484

    def test_planner_2d_plan(self, pnet2):
        shapes = [fc.W.shape for fc in pnet2.layers]
        assert shapes == [(256, 256), (256, 128), (128, 64), (64, 64), (64, 64), (64, 2)]
        assert pnet2.n_params() == sum(m * n + n for m, n in shapes) == 115_394

    def test_3d_models(self):
        enc = EncoderModel(3)
        pnet = PlannerModel(3)
        assert enc.feature_dim == 250 and pnet.input_dim == 256
        assert pnet.layers[0].W.shape == (256, 1024)
        assert pnet.layers[-1].W.shape[1] == 3


def random_cloud(rng, n):
    return rng.uniform(-1, 1, size=(n, 2)).astype(np.float32)


class TestEncoder:
    def test_permutation_invariance_1k_clouds(self, enc2):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            pts = random_cloud(rng, int(rng.integers(1, 40)))
            phi = enc2.encode(pts)
            assert enc2.encode(pts[rng.permutation(len(pts))]).tobytes() == phi.tobytes()

    def test_streaming_equals_batch_max(self, enc2):
        rng = np.random.default_rng(1)
        for n in (1, 63, 64, 65, 700):
            pts = random_cloud(rng, n)
            batch = enc2.point_features(pts).max(axis=0)
            for chunk in (1, 7, 64, 1000):
                np.testing.assert_array_equal(enc2.encode(pts, chunk=chunk), batch)

    def test_single_point_and_duplicates(self, enc2):
        rng = np.random.default_rng(2)
        p = random_cloud(rng, 1)
        np.testing.assert_array_equal(encode(enc2, p), enc2.point_features(p)[0])
        pts = random_cloud(rng, 30)
        np.testing.assert_array_equal(enc2.encode(np.repeat(pts, 2, axis=0)), enc2.encode(pts))

    def test_dim_mismatch(self, enc2):
        with pytest.raises(DimMismatch):
            enc2.encode(np.zeros((5, 3), np.float32))

    def test_backward_before_forward(self):
        with pytest.raises(NoForwardState):
            EncoderModel(2).backward(np.zeros((1, 252), np.float32))


class RecordingRng:
    def __init__(self, rng):
        self.rng, self.calls = rng, []

    def words(self, n):
        w = self.rng.words(n)
        self.calls.append(w)
        return w


class ReplayRng:
    def __init__(self, chunks):
        self.chunks = list(chunks)

    def words(self, n):
        w = self.chunks.pop(0)
        assert w.size == n
        return w


class TestPlanStep:
    def test_rows_are_independent(self, pnet2):
        rng = np.random.default_rng(5)
        phi = rng.random(252).astype(np.float32)
        C = rng.uniform(-1, 1, (8, 2))
        G = rng.uniform(-1, 1, (8, 2))
        rec = RecordingRng(Mt19937(77))
        full = plan_step(pnet2, phi, C, G, rec)
        widths = [fc.W.shape[1] for fc in pnet2.layers[:-1]]
        for i in range(8):
            per_row = [w.reshape(8, n)[i] for w, n in zip(rec.calls, widths)]
            single = pnet2.step(phi, C[i:i + 1], G[i:i + 1], ReplayRng(per_row))
            np.testing.assert_array_equal(single[0], full[i])

    def test_zero_network(self):
        pnet = PlannerModel(2, widths=(8, 8))
        for fc in pnet.layers:
            fc.W[...] = 0
            fc.b[...] = 0
        out = pnet.step(np.ones(252), np.ones((4, 2)), np.ones((4, 2)), Mt19937(1))
        np.testing.assert_array_equal(out, 0)

    def test_deterministic_and_stochastic(self, pnet2):
        phi = np.linspace(0, 1, 252, dtype=np.float32)
        C, G = np.zeros((2, 2)), np.ones((2, 2)) * 0.5
        a = pnet2.step(phi, C, G, Mt19937(3))
        np.testing.assert_array_equal(a, pnet2.step(phi, C, G, Mt19937(3)))
        assert not np.array_equal(a, pnet2.step(phi, C, G, Mt19937(4)))

    def test_dim_mismatch(self, pnet2):
        with pytest.raises(DimMismatch):
            pnet2.step(np.zeros(252), np.zeros((2, 3)), np.zeros((2, 3)), Mt19937(1))
        with pytest.raises(DimMismatch):
            pnet2.step(np.zeros(100), np.zeros((2, 2)), np.zeros((2, 2)), Mt19937(1))
