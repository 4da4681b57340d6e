import numpy as np
import pytest

from dmimochan.geometry import (DEFAULT_GRID_N, Deployment, GeometryError,
                                InteractingObject, LinkState, PointCloud,
                                Trajectory, classify_state, distance,
                                fresnel_coverage, fresnel_radius,
                                place_interacting_objects,
                                shape_exponential_weights,
                                weighted_rms_spread)

from oracles import (coverage_area_oracle, frame_rect_cloud,
                     profile_rms_spread_oracle)

RADIUS = fresnel_radius(3.75e9)  # 2 wavelengths ~ 0.16 m
ANCHOR = np.array([0.0, 0.0, 1.0])
AGENT = np.array([8.0, 3.0, 1.0])


class TestTypes:
    def test_deployment_invariants(self):
        dep = Deployment(np.array([[0, 0, 4.0]]))
        assert dep.num_anchors == 1
        assert np.isclose(dep.wavelength, 299792458.0 / 3.75e9)
        assert dep.tone_frequencies.shape == (449,)
        # centered grid: symmetric around DC
        assert np.isclose(dep.tone_frequencies.sum(), 0.0)
        with pytest.raises(GeometryError):
            Deployment(np.empty((0, 3)))
        with pytest.raises(GeometryError):
            Deployment(np.array([[0, 0, np.inf]]))
        with pytest.raises(GeometryError):
            Deployment(np.array([[0, 0, 1.0]]), carrier_freq=-1)

    def test_trajectory_speed_limit(self):
        pos = np.zeros((5, 3))
        pos[:, 0] = np.arange(5) * 0.02  # 4 m/s at 200 snapshots/s
        with pytest.raises(GeometryError):
            Trajectory(pos, snapshot_rate=200.0, max_speed=2.0)
        tr = Trajectory(pos, snapshot_rate=200.0, max_speed=5.0)
        assert np.allclose(tr.speeds, 4.0)
        assert np.isclose(tr.total_distance, 0.08)

    def test_trajectory_needs_two_points(self):
        with pytest.raises(GeometryError):
            Trajectory(np.zeros((1, 3)))

    def test_straight_line_constructor(self):
        tr = Trajectory.straight_line([0, 0, 1], [4, 0, 1], speed=0.8,
                                      snapshot_rate=200.0)
        assert np.isclose(tr.total_distance, 4.0, atol=1e-9)
        assert np.allclose(tr.speeds, 0.8, atol=1e-6)

    def test_interacting_object_invariants(self):
        io = InteractingObject([1, 2, 3], 1e-9, 0.5, 1.0)
        assert io.excess_delay == 1e-9
        with pytest.raises(GeometryError):
            InteractingObject([1, 2, 3], -1e-9, 0.5, 1.0)
        with pytest.raises(GeometryError):
            InteractingObject([1, 2, 3], 1e-9, -0.5, 1.0)
        with pytest.raises(GeometryError):
            InteractingObject([1, 2, 3], 1e-9, 0.5, 7.0)

    def test_point_cloud_text_roundtrip(self, tmp_path):
        path = tmp_path / "cloud.txt"
        path.write_text("# a comment\n1.0 2.0 3.0\n4 5 6  # trailing\n\n")
        cloud = PointCloud.from_text(path)
        assert len(cloud) == 2
        assert np.allclose(cloud.points[1], [4, 5, 6])
        out = tmp_path / "out.txt"
        cloud.to_text(out)
        again = PointCloud.from_text(out)
        assert np.allclose(again.points, cloud.points)
        bad = tmp_path / "bad.txt"
        bad.write_text("1.0 2.0\n")
        with pytest.raises(GeometryError):
            PointCloud.from_text(bad)


class TestDistance:
    def test_three_four_five(self):
        dep = Deployment(np.array([[0.0, 0.0, 0.0]]))
        assert distance(0, [3.0, 4.0, 0.0], dep) == 5.0

    def test_identical_positions(self):
        dep = Deployment(np.array([[1.0, 2.0, 3.0]]))
        assert distance(0, [1.0, 2.0, 3.0], dep) == 0.0

    def test_vertical(self):
        dep = Deployment(np.array([[0.0, 0.0, 4.0]]))
        assert distance(0, [0.0, 0.0, 0.0], dep) == 4.0

    def test_invalid_index(self):
        dep = Deployment(np.array([[0.0, 0.0, 4.0]]))
        with pytest.raises(GeometryError):
            distance(1, [0.0, 0.0, 0.0], dep)


class TestFresnelCoverage:
    def test_empty_cloud(self):
        assert fresnel_coverage(ANCHOR, AGENT, PointCloud(), RADIUS) == 0.0

    def test_full_slab_is_100(self):
        rect = ((-RADIUS, RADIUS), (-RADIUS, RADIUS))
        pts = frame_rect_cloud(ANCHOR, AGENT, RADIUS, rect, (0.45, 0.55),
                               spacing=RADIUS / 64)
        cov = fresnel_coverage(ANCHOR, AGENT, PointCloud(pts), RADIUS)
        assert cov == 100.0

    def test_half_plane_is_50(self):
        rect = ((0.0, RADIUS), (-RADIUS, RADIUS))
        pts = frame_rect_cloud(ANCHOR, AGENT, RADIUS, rect, (0.3, 0.7),
                               spacing=RADIUS / 64)
        cov = fresnel_coverage(ANCHOR, AGENT, PointCloud(pts), RADIUS)
        oracle = coverage_area_oracle(RADIUS, [rect])
        assert abs(cov - oracle) <= 2.0
        assert abs(cov - 50.0) <= 2.0

    def test_degenerate_segment(self):
        with pytest.raises(GeometryError):
            fresnel_coverage(ANCHOR, ANCHOR, PointCloud(), RADIUS)

    def test_grid_too_coarse(self):
        with pytest.raises(GeometryError):
            fresnel_coverage(ANCHOR, AGENT, PointCloud(), RADIUS, grid_n=4)

    def test_swap_symmetry(self, rng):
        pts = rng.uniform(-1, 9, size=(4000, 3))
        cloud = PointCloud(pts)
        a = fresnel_coverage(ANCHOR, AGENT, cloud, RADIUS)
        b = fresnel_coverage(AGENT, ANCHOR, cloud, RADIUS)
        assert a == b  # bit-identical by the canonical-frame construction

    def test_monotone_in_points(self, rng):
        rect = ((-RADIUS / 3, RADIUS / 2), (-RADIUS, RADIUS / 4))
        pts = frame_rect_cloud(ANCHOR, AGENT, RADIUS, rect, (0.2, 0.4),
                               spacing=RADIUS / 20)
        cloud_small = PointCloud(pts[::7])
        cloud_big = PointCloud(pts)
        cov_small = fresnel_coverage(ANCHOR, AGENT, cloud_small, RADIUS)
        cov_big = fresnel_coverage(ANCHOR, AGENT, cloud_big, RADIUS)
        assert cov_big >= cov_small

    def test_outside_window_ignored(self):
        rect = ((-RADIUS, RADIUS), (-RADIUS, RADIUS))
        behind = frame_rect_cloud(ANCHOR, AGENT, RADIUS, rect, (1.05, 1.2),
                                  spacing=RADIUS / 16)
        far = frame_rect_cloud(ANCHOR, AGENT, RADIUS,
                               ((RADIUS * 1.2, RADIUS * 3), (-RADIUS, RADIUS)),
                               (0.4, 0.6), spacing=RADIUS / 16)
        cov = fresnel_coverage(ANCHOR, AGENT,
                               PointCloud(np.vstack([behind, far])), RADIUS)
        assert cov == 0.0

    def test_raster_matches_area_oracle_on_random_slabs(self, rng):
        """Acceptance-grade check: 20 random slab scenes within 2 points."""
        for trial in range(20):
            u0 = rng.uniform(-RADIUS, RADIUS * 0.5)
            width = rng.uniform(0.3 * RADIUS, 1.6 * RADIUS)
            v0 = rng.uniform(-RADIUS, 0.0)
            height = rng.uniform(0.5 * RADIUS, 2.2 * RADIUS)
            rect = ((u0, min(u0 + width, RADIUS)), (v0, min(v0 + height, RADIUS)))
            t_span = sorted(rng.uniform(0.1, 0.9, size=2))
            if t_span[1] - t_span[0] < 0.05:
                t_span = (t_span[0], t_span[0] + 0.05)
            pts = frame_rect_cloud(ANCHOR, AGENT, RADIUS, rect, t_span,
                                   spacing=RADIUS / 64)
            if pts.shape[0] == 0:
                continue
            cov = fresnel_coverage(ANCHOR, AGENT, PointCloud(pts), RADIUS)
            oracle = coverage_area_oracle(RADIUS, [rect], n_samples=200_000,
                                          seed=trial)
            assert abs(cov - oracle) <= 2.0, f"scene {trial}: {cov} vs {oracle}"


class TestClassifyState:
    def test_examples(self):
        assert classify_state(0.0) is LinkState.LOS
        assert classify_state(100.0) is LinkState.OLOS
        assert classify_state(50.0) is LinkState.LOS  # boundary goes to LoS

    def test_domain(self):
        with pytest.raises(GeometryError):
            classify_state(-1.0)
        with pytest.raises(GeometryError):
            classify_state(101.0)


class TestWeightShaping:
    def test_degenerate_delays_give_equal_weights(self):
        p = shape_exponential_weights(np.zeros(2), 47e-9)
        assert np.allclose(p, [0.5, 0.5])
        w = np.sqrt(p)
        assert np.allclose(w, 1 / np.sqrt(2))
        assert np.isclose(weighted_rms_spread(np.zeros(2), p), 0.0)

    def test_exact_spread_on_drawn_delays(self, rng):
        delays = rng.exponential(47e-9, size=200)
        p = shape_exponential_weights(delays, 47e-9)
        assert np.isclose(p.sum(), 1.0, atol=1e-12)
        spread = profile_rms_spread_oracle(delays, p)
        assert abs(spread - 47e-9) < 1e-13

    def test_composite_direct_tap(self, rng):
        delays = 50e-9 + rng.exponential(40e-9, size=150)
        p = shape_exponential_weights(delays, 60e-9, direct_delay=10e-9,
                                      direct_power=0.6)
        tau = np.concatenate([[10e-9], delays])
        powers = np.concatenate([[0.6], 0.4 * p])
        spread = profile_rms_spread_oracle(tau, powers)
        assert abs(spread - 60e-9) < 1e-12


class TestPlaceInteractingObjects:
    def test_counts_and_normalization(self, rng, small_deployment):
        ios = place_interacting_objects(rng, small_deployment, 0, 30, 47e-9)
        assert len(ios) == 30
        w2 = sum(io.weight ** 2 for io in ios)
        assert abs(w2 - 1.0) < 1e-9
        room = np.asarray(small_deployment.room)
        pos = np.stack([io.position for io in ios])
        assert np.all(pos >= room[:, 0]) and np.all(pos <= room[:, 1])

    def test_profile_spread_matches_target(self, rng, small_deployment):
        for target in (47e-9, 53e-9):
            ios = place_interacting_objects(rng, small_deployment, 0, 200, target)
            delays = np.array([io.excess_delay for io in ios])
            powers = np.array([io.weight ** 2 for io in ios])
            spread = profile_rms_spread_oracle(delays, powers)
            assert target * 0.894 <= spread <= target * 1.106  # +-10% window
            # the solve is exact, so it is really much tighter
            assert abs(spread - target) < 1e-12

    def test_too_few_objects(self, rng, small_deployment):
        with pytest.raises(GeometryError):
            place_interacting_objects(rng, small_deployment, 0, 1, 47e-9)
