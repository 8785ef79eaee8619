import numpy as np
import pytest

from objguide.geom import DegenerateInputError, LineSegment, same_up_to_scale
from objguide.synth import pencil_segments
from objguide.vanishing import (
    HORIZONTAL,
    VERTICAL,
    VpParams,
    classify,
    estimate_vps,
    residual_angle,
    vp_from_pair,
)


class TestVpFromPair:
    def test_parallel_verticals_meet_at_infinity(self):
        s1 = LineSegment((10, 0), (10, 100))
        s2 = LineSegment((50, 0), (50, 100))
        v = vp_from_pair(s1, s2)
        assert same_up_to_scale(v, [0, 1, 0])

    def test_crossing_diagonals(self):
        s1 = LineSegment((-10, -10), (10, 10))  # y = x
        s2 = LineSegment((-10, 10), (10, -10))  # y = -x
        v = vp_from_pair(s1, s2)
        assert same_up_to_scale(v, [0, 0, 1])

    def test_converging_segments(self):
        target = np.array([500.0, 300.0])
        segs = []
        for start in ([0.0, 100.0], [0.0, 600.0]):
            start = np.array(start)
            d = target - start
            segs.append(LineSegment(start, start + 0.3 * d))
        v = vp_from_pair(*segs)
        assert np.allclose(v[:2] / v[2], target, atol=1e-6)

    def test_collinear_segments_raise(self):
        s1 = LineSegment((0, 0), (10, 0))
        s2 = LineSegment((20, 0), (40, 0))
        with pytest.raises(DegenerateInputError):
            vp_from_pair(s1, s2)


class TestResidualAngle:
    def test_aligned_horizontal(self):
        s = LineSegment((0, 0), (10, 0))
        assert residual_angle(s, np.array([1.0, 0, 0])) == pytest.approx(0.0)

    def test_perpendicular(self):
        s = LineSegment((0, 0), (0, 10))
        assert residual_angle(s, np.array([1.0, 0, 0])) == pytest.approx(90.0)

    def test_diagonal_vs_infinite_horizontal(self):
        s = LineSegment((0, 0), (10, 10))
        assert residual_angle(s, np.array([1.0, 0, 0])) == pytest.approx(45.0)

    def test_midpoint_on_vp(self):
        s = LineSegment((0, 0), (10, 0))
        assert residual_angle(s, np.array([5.0, 0.0, 1.0])) == 0.0


class TestEstimateVps:
    def test_axis_aligned_families(self):
        segs = [LineSegment((10 * i, 0), (10 * i, 100)) for i in range(50)]
        segs += [LineSegment((0, 10 * i), (200, 10 * i)) for i in range(50)]
        vps = estimate_vps(segs, VpParams(rng_seed=1))
        assert len(vps) == 2
        assert {vp.support for vp in vps} == {50}
        dirs = {tuple(np.round(np.abs(vp.point), 6)) for vp in vps}
        assert (0.0, 1.0, 0.0) in dirs and (1.0, 0.0, 0.0) in dirs

    def test_pencil_with_outliers(self):
        rng = np.random.default_rng(4)
        vp = np.array([2000.0, 400.0, 1.0])
        inliers = pencil_segments(vp, 40, rng, region=(0, 0, 1280, 960))
        outliers = []
        for _ in range(20):
            mid = rng.uniform([0, 0], [1280, 960])
            ang = rng.uniform(0, np.pi)
            d = 20 * np.array([np.cos(ang), np.sin(ang)])
            outliers.append(LineSegment(mid - d, mid + d))
        vps = estimate_vps(inliers + outliers, VpParams(rng_seed=2))
        assert vps
        best = vps[0]
        assert all(residual_angle(s, best.point) < 0.5 for s in inliers)

    def test_too_few_segments(self):
        assert estimate_vps([], VpParams()) == []
        assert estimate_vps([LineSegment((0, 0), (1, 0))], VpParams()) == []

    def test_determinism(self):
        rng = np.random.default_rng(8)
        segs = pencil_segments(np.array([1500.0, 300, 1]), 30, rng, noise_deg=0.5)
        segs += pencil_segments(np.array([0.0, 1, 0]), 30, rng, noise_deg=0.5)
        a = estimate_vps(segs, VpParams(rng_seed=5))
        b = estimate_vps(segs, VpParams(rng_seed=5))
        assert len(a) == len(b)
        for va, vb in zip(a, b):
            assert np.array_equal(va.point, vb.point)
            assert va.inlier_ids == vb.inlier_ids

    def test_invariants(self):
        rng = np.random.default_rng(12)
        segs = pencil_segments(np.array([2500.0, 500, 1]), 35, rng, noise_deg=0.3)
        segs += pencil_segments(np.array([0.0, 1, 0]), 25, rng, noise_deg=0.3)
        segs += pencil_segments(np.array([-900.0, 450, 1]), 15, rng, noise_deg=0.3)
        params = VpParams(rng_seed=0)
        vps = estimate_vps(segs, params)
        seen = set()
        supports = [vp.support for vp in vps]
        assert supports == sorted(supports, reverse=True)
        for vp in vps:
            assert not seen & set(vp.inlier_ids)
            seen |= set(vp.inlier_ids)
            for i in vp.inlier_ids:
                assert residual_angle(segs[i], vp.point) <= params.angle_thresh

    def test_noise_free_refinement(self):
        rng = np.random.default_rng(21)
        segs = pencil_segments(np.array([1800.0, 350, 1]), 40, rng)
        vps = estimate_vps(segs, VpParams(rng_seed=3))
        assert len(vps) == 1
        assert max(residual_angle(s, vps[0].point) for s in segs) < 1e-6


class TestClassify:
    def test_infinite_vertical(self):
        segs = [LineSegment((10 * i, 0), (10 * i, 100)) for i in range(10)]
        vps = classify(estimate_vps(segs, VpParams()), VpParams(), center=(640, 480))
        assert vps[0].orientation == VERTICAL

    def test_infinite_horizontal(self):
        segs = [LineSegment((0, 10 * i), (200, 10 * i)) for i in range(10)]
        vps = classify(estimate_vps(segs, VpParams()), VpParams(), center=(640, 480))
        assert vps[0].orientation == HORIZONTAL

    def test_far_lateral_point_is_horizontal(self):
        rng = np.random.default_rng(3)
        segs = pencil_segments(np.array([10000.0, 350, 1]), 20, rng)
        vps = classify(estimate_vps(segs, VpParams()), VpParams(), center=(960, 540))
        assert vps[0].orientation == HORIZONTAL

    def test_single_vertical_kept(self):
        # Two vertical-cone candidates: only the better-supported one stays vertical.
        rng = np.random.default_rng(6)
        segs = pencil_segments(np.array([600.0, 20000, 1]), 30, rng, region=(0, 0, 1280, 960))
        segs += pencil_segments(np.array([700.0, -30000, 1]), 12, rng, region=(0, 0, 1280, 960))
        vps = classify(estimate_vps(segs, VpParams()), VpParams(), center=(640, 480))
        labels = [vp.orientation for vp in vps]
        assert labels.count(VERTICAL) == 1
        assert vps[0].orientation == VERTICAL
