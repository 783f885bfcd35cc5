import math

import numpy as np
import pytest

from gdmap.diffusion import (
    NoiseSchedule,
    NoisyMapState,
    build_schedule,
    denoise_chain,
    forward_diffuse_group,
    forward_diffuse_map,
    init_noisy_map,
    predict_x0,
    reverse_step,
    sample_map,
)
from gdmap.errors import DegenerateSchedule, EmptyInput, InvalidArgument
from gdmap.grouping import GroupedMap, assign_groups, normalize, recenter


class TestSchedule:
    def test_single_step(self):
        s = NoiseSchedule([0.5])
        assert s.alpha.tolist() == [0.5] and s.alpha_bar.tolist() == [0.5]

    def test_two_steps(self):
        s = NoiseSchedule([0.1, 0.3])
        np.testing.assert_allclose(s.alpha_bar, [0.9, 0.63], rtol=0, atol=1e-15)

    def test_default_schedule(self):
        s = build_schedule()
        assert s.T == 1000
        assert s.beta[0] == 1e-4 and s.beta[-1] == pytest.approx(0.02, abs=1e-15)
        # independent product
        ab, prods = 1.0, []
        for b in np.linspace(1e-4, 0.02, 1000):
            ab *= 1 - b
            prods.append(ab)
        np.testing.assert_allclose(s.alpha_bar, prods, rtol=1e-12)
        assert prods[-1] < 1e-3
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert np.all(np.diff(s.beta) >= 0)
        assert np.all((s.beta > 0) & (s.beta < 1))

    @pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgument):
            build_schedule(*args)


class TestForward:
    def test_zero_noise_limit(self):
        s = NoiseSchedule([0.0])
        g0 = np.array([[1.0, -2.0, 3.0]])
        np.testing.assert_array_equal(forward_diffuse_group(g0, 1, np.ones((1, 3)), s), g0)

    def test_hand_value(self):
        s = NoiseSchedule([0.25])  # alpha_bar = 0.75
        out = forward_diffuse_group(np.zeros((1, 3)), 1, np.array([[2.0, 0, 0]]), s)
        np.testing.assert_allclose(out, [[1.0, 0, 0]], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            forward_diffuse_group(np.zeros((2, 3)), 1, np.zeros((3, 3)), build_schedule(10))

    def test_bad_timestep(self):
        s = build_schedule(10)
        for t in (0, 11):
            with pytest.raises(InvalidArgument):
                forward_diffuse_group(np.zeros((1, 3)), t, np.zeros((1, 3)), s)

    def test_gaussianises_at_T(self):
        s = build_schedule()
        rng = np.random.default_rng(0)
        g0 = rng.uniform(-3, 3, (10_000, 3))
        gT = forward_diffuse_group(g0, s.T, rng.standard_normal(g0.shape), s)
        assert np.all(np.abs(gT.mean(axis=0)) < 0.05)
        assert np.all(np.abs(gT.std(axis=0) - 1) < 0.05)


class TestForwardMap:
    def test_fixed_point(self):
        g = GroupedMap([[3, 4, 5]], [0], [[3, 4, 5]])
        s = NoiseSchedule([0.5])
        st = forward_diffuse_map(g, 1, 0, s)
        # replay with zero noise through the same formula
        np.testing.assert_allclose(st.points - math.sqrt(0.5) * st.eps, [[3, 4, 5]], atol=1e-15)

    def test_groupwise_independent(self):
        rng = np.random.default_rng(1)
        pts = np.concatenate([rng.normal(0, 1, (5, 3)), rng.normal(20, 1, (4, 3))])
        pts = pts[rng.permutation(9)]
        g = recenter(assign_groups(pts, [[0, 0, 0], [20, 20, 20]]))
        s = build_schedule(50)
        st = forward_diffuse_map(g, 17, 123, s)
        offs = normalize(g).offsets
        pos = 0
        for i, off in enumerate(offs):
            e = st.eps[pos : pos + len(off)]
            expect = g.centers[i] + forward_diffuse_group(off, 17, e, s)
            np.testing.assert_allclose(st.points[pos : pos + len(off)], expect, atol=1e-12)
            assert np.all(st.labels[pos : pos + len(off)] == i)
            pos += len(off)

    def test_inverts_with_recorded_noise(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-50, 50, (300, 3))
        g = assign_groups(pts, rng.uniform(-50, 50, (12, 3)))
        s = build_schedule()
        for t in (1, 10, 500, 1000):
            st = forward_diffuse_map(g, t, t, s)
            g0 = predict_x0(st.offsets, t, st.eps, s)
            np.testing.assert_allclose(st.anchors + g0, pts[g.order], atol=1e-9, rtol=0)

    def test_seeded(self):
        g = assign_groups(np.random.default_rng(0).normal(size=(30, 3)), [[0, 0, 0]])
        s = build_schedule(20)
        a = forward_diffuse_map(g, 5, 9, s).points
        b = forward_diffuse_map(g, 5, 9, s).points
        np.testing.assert_array_equal(a, b)


class TestPredictX0:
    def test_zero_signal(self):
        s = build_schedule(100)
        eps = np.random.default_rng(0).normal(size=(4, 3))
        gt = math.sqrt(1 - s.alpha_bar[41]) * eps
        np.testing.assert_allclose(predict_x0(gt, 42, eps, s), 0, atol=1e-15)

    def test_identity_when_no_noise(self):
        s = NoiseSchedule([0.0])
        gt = np.array([[1.0, 2, 3]])
        np.testing.assert_array_equal(predict_x0(gt, 1, np.ones((1, 3)), s), gt)

    def test_degenerate(self):
        with pytest.raises(DegenerateSchedule):
            predict_x0(np.zeros((1, 3)), 1, np.zeros((1, 3)), NoiseSchedule([1.0]))


class TestReverse:
    def test_reduces_to_rescale(self):
        s = build_schedule(10)
        gt = np.array([[1.0, -1, 2]])
        out = reverse_step(gt, 5, np.zeros((1, 3)), np.zeros((1, 3)), s)
        np.testing.assert_allclose(out, gt / math.sqrt(s.alpha[4]), rtol=1e-15)

    def test_zero_beta(self):
        s = NoiseSchedule([0.0, 0.0])
        gt = np.array([[1.0, 2, 3]])
        np.testing.assert_array_equal(reverse_step(gt, 2, np.full((1, 3), 7.0), None, s), gt)

    def test_hand_computed(self):
        s = NoiseSchedule([0.1, 0.3])
        out = reverse_step(np.array([[1.0, 0, 0]]), 2, np.array([[0.5, 0, 0]]), np.zeros((1, 3)), s)
        expect = (1 / math.sqrt(0.7)) * (1 - (0.3 / math.sqrt(0.37)) * 0.5)
        np.testing.assert_allclose(out, [[expect, 0, 0]], rtol=0, atol=1e-15)

    def test_final_step_must_be_deterministic(self):
        with pytest.raises(InvalidArgument):
            reverse_step(np.zeros((1, 3)), 1, np.zeros((1, 3)), np.ones((1, 3)), build_schedule(5))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            reverse_step(np.zeros((2, 3)), 2, np.zeros((1, 3)), None, build_schedule(5))


def test_init_noisy_map():
    st = init_noisy_map([[0, 0, 0]], 10_000, 0)
    assert st.t == 1000
    assert np.all(np.abs(st.points.mean(axis=0)) < 0.05)
    a = init_noisy_map([[0, 0, 0], [5, 5, 5], [9, 0, 0]], 4, 11, T=7)
    b = init_noisy_map([[0, 0, 0], [5, 5, 5], [9, 0, 0]], 4, 11, T=7)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.n == 12 and a.labels.tolist() == [0] * 4 + [1] * 4 + [2] * 4
    with pytest.raises(EmptyInput):
        init_noisy_map(np.zeros((0, 3)), 2, 0)
    with pytest.raises(InvalidArgument):
        init_noisy_map([[0, 0, 0]], 0, 0)


class TestSampleMap:
    def test_oracle_denoiser_one_step(self):
        s = NoiseSchedule([0.2])
        centers = np.array([[0, 0, 0], [10, 0, 0], [0, 5, 1.0]])

        def oracle(state):
            return state.offsets / math.sqrt(1 - s.alpha_bar[state.t - 1])

        out = sample_map(centers, 3, oracle, s, rng_seed=4)
        np.testing.assert_allclose(out, np.repeat(centers, 3, axis=0), atol=1e-12)

    def test_zero_denoiser_closed_form(self):
        s = build_schedule(6, 0.01, 0.2)
        seen = []

        def zero(state):
            seen.append(state.t)
            return np.zeros_like(state.points)

        centers = np.array([[1.0, 2, 3], [-4, 0, 0]])
        st = init_noisy_map(centers, 2, 5, T=s.T)
        rng = np.random.default_rng(77)
        g = st.offsets
        for t in range(s.T, 0, -1):
            z = rng.standard_normal(g.shape) if t > 1 else 0.0
            g = g / math.sqrt(s.alpha[t - 1]) + math.sqrt(s.beta[t - 1]) * z
        out = denoise_chain(st, zero, s, 77)
        assert seen == list(range(s.T, 0, -1))
        assert out.t == 0
        np.testing.assert_allclose(out.points, st.anchors + g, atol=1e-12)
        np.testing.assert_array_equal(out.labels, st.labels)

    def test_bit_identical(self):
        s = build_schedule(20)
        den = lambda st: 0.1 * st.offsets  # noqa: E731
        a = sample_map([[0, 0, 0], [3, 3, 0]], 5, den, s, 99)
        b = sample_map([[0, 0, 0], [3, 3, 0]], 5, den, s, 99)
        assert a.tobytes() == b.tobytes()
        assert a.shape == (10, 3)


def test_state_validation():
    with pytest.raises(InvalidArgument):
        NoisyMapState(1, np.zeros((2, 3)), [0], np.zeros((1, 3)))
    with pytest.raises(InvalidArgument):
        NoisyMapState(1, np.zeros((1, 3)), [1], np.zeros((1, 3)))


def test_headings_follow_the_state():
    h = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    g = assign_groups([[0, 0, 0], [9, 9, 0]], [[0, 0, 0], [9, 9, 0]], headings=h)
    st = forward_diffuse_map(g, 3, 0, build_schedule(5))
    np.testing.assert_array_equal(st.headings, h)
    assert st.with_offsets(st.offsets, 2).headings is st.headings
    with pytest.raises(InvalidArgument):
        init_noisy_map([[0, 0, 0]], 2, 0, T=5, headings=np.zeros((2, 3)))
