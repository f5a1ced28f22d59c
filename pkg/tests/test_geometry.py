"""Camera model, crop transform, angle convention and metric tests.

Derived expectations are computed by independent means in the test body
(direct formula evaluation, hand back-projection, round trips).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazesynth.errors import (
    BehindCameraError,
    DegenerateRayError,
    InvalidCropError,
    InvalidDirectionError,
    InvalidIntrinsicsError,
)
from gazesynth.geometry import (
    Angles,
    CameraIntrinsics,
    CropSpec,
    angular_error_deg,
    backproject_unit_ray,
    crop_matrix,
    head_rotation,
    is_rotation,
    pitch_yaw_to_vector,
    project_point,
    rodrigues,
    rotation_to_axis_angle,
    vector_to_pitch_yaw,
)

CAM = CameraIntrinsics(fx=960.0, fy=960.0, cx=224.0, cy=224.0, width=448, height=448)


class TestCropMatrix:
    def test_full_image_identity(self):
        w, h = 640, 480
        crop = CropSpec(center_x=w / 2, center_y=h / 2, box_w=w, box_h=h, scale_x=1, scale_y=1)
        np.testing.assert_allclose(crop_matrix(crop, w, h), np.eye(3), atol=0)

    def test_center_maps_to_patch_center(self):
        crop = CropSpec(center_x=400, center_y=300, box_w=200, box_h=160, scale_x=1.2, scale_y=1.1)
        T = crop_matrix(crop)
        p = T @ np.array([400.0, 300.0, 1.0])
        np.testing.assert_allclose(p, [1.2 * 200 / 2, 1.1 * 160 / 2, 1.0], atol=1e-12)

    def test_matches_direct_formula(self):
        # oracle: the cropping map u' = s*(u - (c - b/2)) evaluated entrywise
        crop = CropSpec(center_x=400, center_y=300, box_w=200, box_h=200, scale_x=1.12, scale_y=1.12)
        T = crop_matrix(crop, 640, 480)
        expected = np.array(
            [
                [1.12, 0, -1.12 * (400 - 100)],
                [0, 1.12, -1.12 * (300 - 100)],
                [0, 0, 1],
            ]
        )
        np.testing.assert_allclose(T, expected, atol=1e-12)
        np.testing.assert_allclose(np.linalg.inv(T) @ T, np.eye(3), atol=1e-12)

    def test_invalid_crop_rejected(self):
        with pytest.raises(InvalidCropError):
            CropSpec(center_x=0, center_y=0, box_w=-5, box_h=10, scale_x=1, scale_y=1)
        with pytest.raises(InvalidCropError):
            CropSpec(center_x=0, center_y=0, box_w=5, box_h=10, scale_x=0, scale_y=1)

    @given(
        cx=st.floats(-100, 800), cy=st.floats(-100, 800),
        bw=st.floats(10, 500), bh=st.floats(10, 500),
        sx=st.floats(0.1, 4), sy=st.floats(0.1, 4),
    )
    @settings(max_examples=50)
    def test_invertible(self, cx, cy, bw, bh, sx, sy):
        T = crop_matrix(CropSpec(cx, cy, bw, bh, sx, sy))
        np.testing.assert_allclose(np.linalg.inv(T) @ T, np.eye(3), atol=1e-9)


class TestBackprojection:
    def test_principal_point_is_optical_axis(self):
        ray = backproject_unit_ray((CAM.cx, CAM.cy), CAM, np.eye(3))
        np.testing.assert_allclose(ray, [0, 0, 1], atol=1e-15)

    def test_45_degree_pixel(self):
        # oracle: C^-1 (224+960, 224, 1) = (1, 0, 1), normalized
        ray = backproject_unit_ray((CAM.cx + 960.0, CAM.cy), CAM)
        np.testing.assert_allclose(ray, np.array([1, 0, 1]) / math.sqrt(2), atol=1e-12)

    def test_reprojection_round_trip(self, rng):
        crop = CropSpec(center_x=300, center_y=260, box_w=250, box_h=250, scale_x=1.3, scale_y=1.3)
        T = crop_matrix(crop)
        cam = CameraIntrinsics(fx=850, fy=870, cx=310, cy=245, width=640, height=480)
        pix = rng.uniform(10, 300, size=(100, 2))
        rays = backproject_unit_ray(pix, cam, T)
        assert np.allclose(np.linalg.norm(rays, axis=1), 1.0, atol=1e-12)
        pts = 10.0 * rays
        back = project_point(cam, pts)
        back_h = np.hstack([back, np.ones((100, 1))]) @ T.T
        np.testing.assert_allclose(back_h[:, :2], pix, atol=1e-9)

    def test_behind_camera_pixel_rejected(self):
        with pytest.raises(DegenerateRayError):
            backproject_unit_ray((100.0, 100.0, -1.0), CAM)


class TestProjection:
    def test_optical_axis(self):
        np.testing.assert_allclose(project_point(CAM, (0, 0, 300)), [CAM.cx, CAM.cy], atol=0)

    def test_45_degree_ray(self):
        np.testing.assert_allclose(project_point(CAM, (300, 0, 300)), [CAM.cx + 960, CAM.cy], atol=1e-12)

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project_point(CAM, (0, 0, -1))

    def test_mutual_inverse_with_backprojection(self, rng):
        pts = rng.uniform(-150, 150, size=(100, 3))
        pts[:, 2] = rng.uniform(100, 600, size=100)
        uv = project_point(CAM, pts)
        rays = backproject_unit_ray(uv, CAM)
        # each ray must be parallel to its point
        cosang = np.sum(rays * pts, axis=1) / np.linalg.norm(pts, axis=1)
        np.testing.assert_allclose(cosang, 1.0, atol=1e-12)

    def test_intrinsics_invariants(self):
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(fx=1, fy=1, cx=20, cy=0, width=10, height=10)


class TestAngles:
    def test_frontal(self):
        a = vector_to_pitch_yaw((0, 0, -1))
        assert a.pitch == 0 and a.yaw == 0

    def test_ten_degrees_up(self):
        a = vector_to_pitch_yaw((0, -math.sin(math.radians(10)), -math.cos(math.radians(10))))
        assert a.pitch == pytest.approx(math.radians(10), abs=1e-12)
        assert a.yaw == pytest.approx(0, abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(InvalidDirectionError):
            vector_to_pitch_yaw((0, 0, 0))

    @given(
        pitch=st.floats(-88.9, 88.9),
        yaw=st.floats(-179.0, 179.0),
    )
    @settings(max_examples=200)
    def test_round_trip(self, pitch, yaw):
        a = Angles.from_degrees(pitch, yaw)
        v = pitch_yaw_to_vector(a)
        b = vector_to_pitch_yaw(v)
        assert abs(b.pitch - a.pitch) < 1e-12
        assert abs(b.yaw - a.yaw) < 1e-12
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    @given(k=st.floats(1e-3, 1e3))
    @settings(max_examples=50)
    def test_scale_invariance(self, k):
        v = np.array([0.3, -0.5, -0.8])
        a = vector_to_pitch_yaw(v)
        b = vector_to_pitch_yaw(k * v)
        assert a.pitch == pytest.approx(b.pitch, abs=1e-12)
        assert a.yaw == pytest.approx(b.yaw, abs=1e-12)


class TestAngularError:
    def test_identical(self):
        assert angular_error_deg((1, 2, 3), (1, 2, 3)) == 0

    def test_orthogonal(self):
        assert angular_error_deg((1, 0, 0), (0, 1, 0)) == pytest.approx(90)

    def test_opposite(self):
        assert angular_error_deg((1, 1, 0), (-1, -1, 0)) == pytest.approx(180)

    def test_symmetry_and_triangle_inequality(self, rng):
        for _ in range(100):
            a, b, c = rng.normal(size=(3, 3))
            ab = angular_error_deg(a, b)
            assert ab == pytest.approx(angular_error_deg(b, a), abs=1e-9)
            assert ab <= angular_error_deg(a, c) + angular_error_deg(c, b) + 1e-9

    def test_zero_vector(self):
        with pytest.raises(InvalidDirectionError):
            angular_error_deg((0, 0, 0), (1, 0, 0))


class TestRotations:
    def test_head_rotation_round_trip(self, rng):
        for _ in range(200):
            a = Angles.from_degrees(rng.uniform(-80, 80), rng.uniform(-80, 80))
            R = head_rotation(a)
            assert is_rotation(R)
            b = vector_to_pitch_yaw(R @ np.array([0, 0, -1.0]))
            assert b.pitch == pytest.approx(a.pitch, abs=1e-12)
            assert b.yaw == pytest.approx(a.yaw, abs=1e-12)

    def test_rodrigues_log_exp(self, rng):
        for _ in range(100):
            w = rng.normal(size=3)
            w = w / np.linalg.norm(w) * rng.uniform(0, math.pi - 1e-3)
            R = rodrigues(w)
            assert is_rotation(R)
            np.testing.assert_allclose(rotation_to_axis_angle(R), w, atol=1e-8)
