import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdmap.errors import EmptyInput, InvalidArgument
from gdmap.geometry import as_cloud, build_index, farthest_point_sample, voxelize

from oracles import fps_greedy, nearest_linear, voxel_set


class TestIndex:
    def test_single_point(self):
        idx, d = build_index([[0, 0, 0]]).nearest([[5, 0, 0]])
        assert idx[0] == 0 and d[0] == 5.0

    def test_two_points(self):
        idx, d = build_index([[0, 0, 0], [3, 0, 0]]).nearest([[1, 0, 0]])
        assert idx[0] == 0 and d[0] == 1.0

    def test_tie_goes_to_lowest_index(self):
        idx, _ = build_index([[2, 0, 0], [-2, 0, 0], [0, 2, 0], [0, -2, 0]]).nearest([[0, 0, 0]])
        assert idx[0] == 0
        idx, _ = build_index([[5, 5, 5], [1, 0, 0], [-1, 0, 0]]).nearest([[0, 0, 0]])
        assert idx[0] == 1

    def test_empty_cloud(self):
        with pytest.raises(EmptyInput):
            build_index(np.zeros((0, 3)))

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-10, 10, (200, 3))
        q = rng.uniform(-12, 12, (50, 3))
        idx, d = build_index(pts).nearest(q)
        for j in range(50):
            bi, bd = nearest_linear(pts, q[j])
            assert idx[j] == bi
            assert d[j] == pytest.approx(bd, abs=1e-12)

    def test_large_cloud_matches_vectorised_scan(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(0, 50, (10_000, 3))
        q = rng.uniform(0, 50, (1000, 3))
        idx, d = build_index(pts).nearest(q)
        brute = np.array([np.argmin(((pts - x) ** 2).sum(1)) for x in q])
        np.testing.assert_array_equal(idx, brute)
        np.testing.assert_allclose(d, np.linalg.norm(pts[brute] - q, axis=1), atol=1e-12)

    def test_rejects_nan(self):
        with pytest.raises(InvalidArgument):
            as_cloud([[0, np.nan, 0]])


class TestFPS:
    def test_forced_pick(self):
        assert farthest_point_sample([[0, 0, 0], [1, 0, 0], [10, 0, 0]], 2, 0).tolist() == [0, 2]

    def test_k_equals_n(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(12, 3))
        out = farthest_point_sample(pts, 12, 5)
        assert out[0] == 5
        assert sorted(out.tolist()) == list(range(12))

    def test_duplicates_still_distinct(self):
        out = farthest_point_sample(np.zeros((4, 3)), 4, 2)
        assert out.tolist() == [2, 0, 1, 3]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_greedy_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 10, (100, 3))
        assert farthest_point_sample(pts, 10, 0).tolist() == fps_greedy(pts.tolist(), 10, 0)

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            farthest_point_sample(np.zeros((3, 3)), 4)
        with pytest.raises(EmptyInput):
            farthest_point_sample(np.zeros((0, 3)), 1)
        with pytest.raises(InvalidArgument):
            farthest_point_sample(np.zeros((3, 3)), 2, start_index=3)

    def test_deterministic(self):
        pts = np.random.default_rng(9).normal(size=(300, 3))
        a = farthest_point_sample(pts, 40, 7)
        b = farthest_point_sample(pts, 40, 7)
        np.testing.assert_array_equal(a, b)

    def test_min_distance_non_increasing(self):
        pts = np.random.default_rng(1).uniform(0, 1, (150, 3))
        order = farthest_point_sample(pts, 40, 0)
        prev = np.inf
        for k in range(2, 41):
            sel = pts[order[:k]]
            d = np.linalg.norm(sel[:, None] - sel[None], axis=-1)
            d[np.diag_indices(k)] = np.inf
            assert d.min() <= prev + 1e-15
            prev = d.min()


class TestVoxelize:
    def test_same_cell(self):
        v = voxelize([[0.5, 0.5, 0.5], [0.6, 0.6, 0.6]], 2)
        assert v.occupied == {(0, 0, 0)}

    def test_floor(self):
        assert voxelize([[1, 0, 0], [3, 0, 0]], 2).occupied == {(0, 0, 0), (1, 0, 0)}

    def test_negative_coordinates_floor_down(self):
        assert voxelize([[-0.1, 0, 0]], 1).occupied == {(-1, 0, 0)}

    def test_matches_oracle(self):
        pts = np.random.default_rng(2).uniform(0, 100, (1000, 3))
        assert voxelize(pts, 4).occupied == voxel_set(pts.tolist(), 4)

    def test_bad_resolution(self):
        for r in (0, -1):
            with pytest.raises(InvalidArgument):
                voxelize([[0, 0, 0]], r)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)),
                  elements=st.floats(-1e3, 1e3)),
           st.floats(0.1, 10))
    def test_idempotent(self, pts, res):
        assert voxelize(pts, res) == voxelize(pts, res)
