import numpy as np
import pytest

from planecal.errors import (
    BehindCameraError,
    InsufficientDataError,
    OutOfBoundsError,
    OutOfViewError,
)
from planecal.projection import (
    CameraIntrinsics,
    LidarProjectionParams,
    PointCloud,
    RangeImage,
    distort_normalized,
    pinhole_project,
    pixel_to_point,
    project_by_id,
    undistort_pixel,
)


def make_intrinsics(**kw):
    base = dict(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)
    base.update(kw)
    return CameraIntrinsics(**base)


def full_scan_cloud(params: LidarProjectionParams):
    """Equiangular full-turn scan whose rays map back to their own bins."""
    cols = np.arange(params.width)
    az = (cols - params.azimuth_offset) / params.azimuth_resolution
    pts, rings = [], []
    for ring in range(params.n_rings):
        r = 5.0 + 0.1 * ring
        pts.append(np.stack([r * np.cos(az), r * np.sin(az), np.full_like(az, 0.05 * ring)], axis=1))
        rings.append(np.full(params.width, ring))
    return PointCloud(np.concatenate(pts), rings=np.concatenate(rings))


class TestPinhole:
    def test_optical_axis(self):
        intr = CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=2, height=2)
        np.testing.assert_allclose(pinhole_project(intr, [0.0, 0.0, 1.0]), [0.0, 0.0])

    def test_principal_point(self):
        uv = pinhole_project(make_intrinsics(), [0.0, 0.0, 5.0])
        np.testing.assert_allclose(uv, [320.0, 240.0])

    def test_hand_evaluated_point(self):
        uv = pinhole_project(make_intrinsics(), [1.0, -1.0, 2.0])
        np.testing.assert_allclose(uv, [620.0, -60.0])

    def test_behind_camera_raises(self):
        with pytest.raises(BehindCameraError):
            pinhole_project(make_intrinsics(), [0.0, 0.0, -1.0])

    def test_batch_matches_single(self, rng):
        intr = make_intrinsics()
        pts = rng.uniform([-1, -1, 1], [1, 1, 5], size=(40, 3))
        batch = pinhole_project(intr, pts)
        for p, uv in zip(pts, batch):
            np.testing.assert_allclose(pinhole_project(intr, p), uv)


class TestUndistort:
    def test_zero_distortion_principal_point(self):
        np.testing.assert_allclose(undistort_pixel(make_intrinsics(), [320.0, 240.0]), [0.0, 0.0])

    def test_zero_distortion_unit_coordinate(self):
        np.testing.assert_allclose(undistort_pixel(make_intrinsics(), [920.0, 240.0]), [1.0, 0.0])

    def test_round_trip_with_k1(self):
        intr = make_intrinsics(distortion=np.array([-0.1, 0.0, 0.0, 0.0, 0.0]))
        ray = np.array([0.3, 0.2])
        xd = distort_normalized(intr, ray)
        px = np.array([intr.fx * xd[0] + intr.cx, intr.fy * xd[1] + intr.cy])
        np.testing.assert_allclose(undistort_pixel(intr, px), ray, atol=1e-8)

    def test_round_trip_full_model(self, rng):
        intr = make_intrinsics(distortion=np.array([-0.28, 0.07, 1e-4, -2e-4, 0.0]))
        rays = rng.uniform(-0.4, 0.4, size=(200, 2))
        pix = distort_normalized(intr, rays) * [intr.fx, intr.fy] + [intr.cx, intr.cy]
        back = undistort_pixel(intr, pix)
        assert np.max(np.abs(back - rays)) < 1e-8

    def test_projection_unprojection_parallel(self, rng):
        # undistort(project(p)) must be parallel to p for points in front
        intr = make_intrinsics(distortion=np.array([0.12, -0.05, 2e-4, 1e-4, 0.01]))
        for _ in range(100):
            p = rng.uniform([-0.5, -0.5, 0.5], [0.5, 0.5, 6.0])
            ray_true = p[:2] / p[2]
            if np.linalg.norm(ray_true) > 0.45:
                continue
            xd = distort_normalized(intr, ray_true)
            px = xd * [intr.fx, intr.fy] + [intr.cx, intr.cy]
            ray = undistort_pixel(intr, px)
            v1 = np.array([ray[0], ray[1], 1.0])
            v2 = p / p[2]
            angle = np.arccos(np.clip(v1 @ v2 / (np.linalg.norm(v1) * np.linalg.norm(v2)), -1, 1))
            assert angle < 1e-6


class TestProjectById:
    params = LidarProjectionParams.for_sensor(n_rings=8, width=64)

    def test_forward_axis(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), rings=np.array([3]))
        img = project_by_id(cloud, self.params)
        assert img.point_index[3, 32] == 0
        assert img.range[3, 32] == pytest.approx(1.0)

    def test_rear_axis_wraps_to_seam(self):
        eps = 1e-9
        cloud = PointCloud(np.array([[-1.0, eps, 0.0]]), rings=np.array([0]))
        img = project_by_id(cloud, self.params)
        # atan2 -> pi, column (f*pi + c) mod width = 0
        assert img.point_index[0, 0] == 0

    def test_collision_keeps_closer_point(self):
        cloud = PointCloud(np.array([[5.0, 0.0, 0.0], [2.0, 0.0, 0.0]]),
                           rings=np.array([1, 1]))
        img = project_by_id(cloud, self.params)
        assert img.point_index[1, 32] == 1
        assert img.range[1, 32] == pytest.approx(2.0)

    def test_ring_out_of_range(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), rings=np.array([8]))
        with pytest.raises(OutOfViewError):
            project_by_id(cloud, self.params)

    def test_empty_cloud(self):
        with pytest.raises(InsufficientDataError):
            project_by_id(PointCloud(np.zeros((0, 3))), self.params)

    def test_ring_from_ordering(self):
        params = LidarProjectionParams.for_sensor(n_rings=2, width=4)
        az = (np.arange(4) - params.azimuth_offset) / params.azimuth_resolution
        ring0 = np.stack([np.cos(az), np.sin(az), np.zeros(4)], axis=1)
        cloud = PointCloud(np.vstack([ring0, ring0 * 2.0]))  # no ring ids
        img = project_by_id(cloud, params)
        assert np.all(img.point_index[0] == np.arange(4))
        assert np.all(img.point_index[1] == np.arange(4, 8))

    def test_full_scan_has_no_holes(self):
        img = project_by_id(full_scan_cloud(self.params), self.params)
        assert np.all(img.filled)
        assert np.all(img.range[img.filled] > 0)

    def test_azimuth_monotonicity(self, rng):
        params = self.params
        az = np.sort(rng.uniform(-np.pi + 1e-6, np.pi, size=500))
        pts = np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=1)
        img_cols = np.rint(params.azimuth_resolution * az + params.azimuth_offset).astype(int)
        unwrapped = np.where(img_cols >= params.width, img_cols - params.width, img_cols)
        # non-decreasing apart from the single wrap at the seam
        diffs = np.diff(unwrapped)
        wrap_points = np.sum(diffs < 0)
        assert wrap_points <= 1


class TestPixelToPoint:
    params = LidarProjectionParams.for_sensor(n_rings=8, width=64)

    def test_round_trip(self):
        cloud = full_scan_cloud(self.params)
        img = project_by_id(cloud, self.params)
        p = pixel_to_point(img, cloud, (4, 10))
        src = img.point_index[4, 10]
        np.testing.assert_array_equal(p, cloud.points[src])

    def test_empty_pixel_returns_none(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), rings=np.array([0]))
        img = project_by_id(cloud, self.params)
        assert pixel_to_point(img, cloud, (5, 5)) is None

    def test_out_of_bounds(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), rings=np.array([0]))
        img = project_by_id(cloud, self.params)
        with pytest.raises(OutOfBoundsError):
            pixel_to_point(img, cloud, (-1, 0))


class TestParamValidation:
    def test_width_resolution_consistency(self):
        with pytest.raises(ValueError):
            LidarProjectionParams(azimuth_resolution=10.0, azimuth_offset=0.0,
                                  n_rings=4, width=128)

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            make_intrinsics(fx=-1.0)
        with pytest.raises(ValueError):
            make_intrinsics(cx=999.0)
