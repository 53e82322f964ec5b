import numpy as np
import pytest

from evadv import (DiffusionWeights, EventStream, NormState, build_neighbor_index,
                   diffuse, diffusion_weights, event_velocity)
from evadv.neighbors import NeighborIndex


def norm_stream(xyt):
    xyt = np.asarray(xyt, dtype=np.float64)
    ev = np.column_stack([xyt, np.ones(len(xyt))])
    return EventStream(ev, (128, 128), NormState(128, 128, 0.0, 1.0))


def random_norm_stream(n, seed):
    rng = np.random.default_rng(seed)
    return norm_stream(np.column_stack(
        [rng.uniform(0, 1, (n, 2)), np.sort(rng.uniform(0, 1, n))]))


class TestVelocity:
    def test_hand_case(self):
        s = norm_stream([[0, 0, 0], [0.1, 0, 0.1], [0.9, 0.9, 0.9]])
        v = event_velocity(s)
        # raw speeds {1.0, 1.0, 1.5052}; first event copies the second
        assert np.allclose(v, [0.0, 0.0, 1.0], atol=1e-6)

    def test_constant_speed_normalizes_to_zero(self):
        t = np.arange(20) / 32.0  # dyadic spacing keeps raw speeds bit-identical
        s = norm_stream(np.column_stack([t * 0.5, np.zeros(20), t]))
        assert np.all(event_velocity(s) == 0.0)

    def test_duplicate_timestamps_finite(self):
        s = norm_stream([[0, 0, 0.5], [0.3, 0.3, 0.5], [0.9, 0.9, 0.5]])
        v = event_velocity(s)
        assert np.all(np.isfinite(v))
        assert np.all((v >= 0) & (v <= 1))

    def test_range(self):
        for seed in range(5):
            v = event_velocity(random_norm_stream(64, seed))
            assert v.min() >= 0 and v.max() <= 1


class TestWeights:
    def test_zero_distance_gives_weight_one(self):
        ni = NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)),
                           np.array([[1], [0]]), 1)
        w = diffusion_weights(ni, np.zeros(2), 0.01, 0.1)
        assert np.all(w.w_spatial == 1.0)

    def test_decay_at_sigma(self):
        ni = NeighborIndex(np.array([[1], [0]]), np.full((2, 1), 0.01),
                           np.array([[1], [0]]), 1)
        w = diffusion_weights(ni, np.zeros(2), 0.01, 0.1)
        assert np.allclose(w.w_spatial, np.exp(-1.0), atol=1e-6)

    def test_zero_velocity_gives_temporal_one(self):
        ni = NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)),
                           np.array([[1], [0]]), 1)
        w = diffusion_weights(ni, np.zeros(2), 0.01, 0.1)
        assert np.all(w.w_temporal == 1.0)

    def test_neighbor_velocity_indexing(self):
        # the temporal weight uses the neighbor's velocity, not the query's
        ni = NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)),
                           np.array([[1], [0]]), 1)
        vel = np.array([0.0, 1.0])
        w = diffusion_weights(ni, vel, 0.01, 0.1)
        assert np.isclose(w.w_temporal[0, 0], np.exp(-10.0))  # row 0 gathers event 1
        assert w.w_temporal[1, 0] == 1.0

    def test_rejects_bad_sigma(self):
        ni = NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)),
                           np.array([[1], [0]]), 1)
        with pytest.raises(ValueError):
            diffusion_weights(ni, np.zeros(2), 0.0, 0.1)


def unit_weights(spatial_idx, temporal_idx):
    k = spatial_idx.shape[1]
    n = spatial_idx.shape[0]
    return DiffusionWeights(np.ones((n, k)), np.ones((n, k)), 0.01, 0.1)


class TestDiffuse:
    def test_two_event_hand_case(self):
        # mutual spatial neighbors, temporal rows self-referential, all
        # weights 1: each output row averages the two perturbations
        ni = NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)),
                           np.array([[0], [1]]), 1)
        pert = np.array([[1.0, 0, 0], [0.0, 0, 0]])
        out = diffuse(pert, ni, unit_weights(ni.spatial_idx, ni.temporal_idx))
        assert np.allclose(out, [[0.5, 0, 0], [0.5, 0, 0]])

    def test_zero_field(self):
        s = random_norm_stream(32, 0)
        ni = build_neighbor_index(s, 4)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        out = diffuse(np.zeros((32, 3)), ni, w)
        assert np.all(out == 0.0)

    def test_constant_field_fixed_point(self):
        for seed in range(10):
            s = random_norm_stream(48, seed)
            ni = build_neighbor_index(s, 5)
            w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
            c = np.array([0.3, -0.2, 0.7])
            out = diffuse(np.tile(c, (48, 1)), ni, w)
            assert np.max(np.abs(out - c)) <= 1e-12

    def test_linearity(self):
        rng = np.random.default_rng(5)
        s = random_norm_stream(40, 11)
        ni = build_neighbor_index(s, 5)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        p = rng.normal(size=(40, 3))
        q = rng.normal(size=(40, 3))
        a, b = 0.7, -1.3
        lhs = diffuse(a * p + b * q, ni, w)
        rhs = a * diffuse(p, ni, w) + b * diffuse(q, ni, w)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_boundedness(self):
        rng = np.random.default_rng(6)
        s = random_norm_stream(40, 12)
        ni = build_neighbor_index(s, 5)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        p = rng.normal(size=(40, 3))
        out = diffuse(p, ni, w)
        for d in range(3):
            assert out[:, d].min() >= p[:, d].min() - 1e-12
            assert out[:, d].max() <= p[:, d].max() + 1e-12

    def test_variance_reduction_100_trials(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            s = random_norm_stream(64, 100 + trial)
            ni = build_neighbor_index(s, 5)
            w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
            p = rng.normal(0.0, 0.01, size=(64, 3))
            out = diffuse(p, ni, w)
            assert np.all(out.var(axis=0) <= p.var(axis=0) + 1e-15)

    def test_input_not_mutated(self):
        s = random_norm_stream(32, 13)
        ni = build_neighbor_index(s, 4)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        p = np.random.default_rng(0).normal(size=(32, 3))
        p0 = p.copy()
        diffuse(p, ni, w)
        assert np.array_equal(p, p0)

    def test_shape_mismatch(self):
        s = random_norm_stream(32, 14)
        ni = build_neighbor_index(s, 4)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        with pytest.raises(ValueError):
            diffuse(np.zeros((31, 3)), ni, w)

    def test_single_half_selection(self):
        s = random_norm_stream(32, 15)
        ni = build_neighbor_index(s, 4)
        w = diffusion_weights(ni, event_velocity(s), 0.01, 0.1)
        p = np.random.default_rng(1).normal(size=(32, 3))
        both = diffuse(p, ni, w)
        sp = diffuse(p, ni, w, temporal=False)
        tp = diffuse(p, ni, w, spatial=False)
        assert np.allclose((sp + tp) / 2.0, both)
        with pytest.raises(ValueError):
            diffuse(p, ni, w, spatial=False, temporal=False)
