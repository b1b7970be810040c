import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panolevel.errors import DomainError
from panolevel.geometry import (
    CameraPose,
    bilinear_sample_wrap,
    erp_pixel_to_ray,
    erp_rays,
    frustum_mask,
    geodesic_distance,
    intrinsics_from_fov,
    persp_pixel_to_ray,
    pose_to_rotation,
    project_perspective_to_erp,
    ray_to_erp_pixel,
    ray_to_persp_pixel,
    render_perspective_from_erp,
    roll_erp,
    rotate_erp,
    rotation_to_pose,
    yaw_rotation,
)
from panolevel.io import read_png, write_png
from panolevel.metrics import psnr


def _random_poses(rng, n, max_pitch=math.radians(89)):
    yaw = rng.uniform(-math.pi, math.pi, n)
    pitch = rng.uniform(-max_pitch, max_pitch, n)
    roll = rng.uniform(-math.pi, math.pi, n)
    return [CameraPose(*p) for p in zip(yaw, pitch, roll)]


class TestIntrinsics:
    def test_ninety_degrees(self):
        intr = intrinsics_from_fov(math.pi / 2, 1.0, 64, 64)
        assert intr.f_y == pytest.approx(1.0, abs=1e-15)
        assert intr.f_x == pytest.approx(1.0, abs=1e-15)

    def test_sixty_degrees_widescreen(self):
        intr = intrinsics_from_fov(math.radians(60), 16 / 9, 160, 90)
        assert intr.f_y == pytest.approx(math.sqrt(3), rel=1e-12)
        assert intr.f_x == pytest.approx(0.9742786, abs=1e-7)
        assert intr.f_x == intr.f_y / (16 / 9)

    @pytest.mark.parametrize("vfov", [0.0, math.pi, -0.1, 4.0, float("nan")])
    def test_bad_vfov(self, vfov):
        with pytest.raises(DomainError):
            intrinsics_from_fov(vfov, 1.0, 8, 8)

    @pytest.mark.parametrize("aspect", [0.0, -1.0])
    def test_bad_aspect(self, aspect):
        with pytest.raises(DomainError):
            intrinsics_from_fov(1.0, aspect, 8, 8)


class TestRotations:
    def test_identity(self):
        np.testing.assert_array_equal(pose_to_rotation(CameraPose()), np.eye(3))

    def test_yaw_turns_forward_to_right(self):
        d = pose_to_rotation(CameraPose(yaw=math.pi / 2)) @ [0, 0, 1]
        np.testing.assert_allclose(d, [1, 0, 0], atol=1e-15)

    def test_pitch_tilts_forward_to_zenith(self):
        d = pose_to_rotation(CameraPose(pitch=math.pi / 2)) @ [0, 0, 1]
        np.testing.assert_allclose(d, [0, 1, 0], atol=1e-15)

    def test_orthonormal(self, rng):
        for pose in _random_poses(rng, 200):
            R = pose_to_rotation(pose)
            assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
            assert abs(np.linalg.det(R) - 1) < 1e-9

    def test_identity_to_pose(self):
        assert rotation_to_pose(np.eye(3)) == CameraPose(0.0, 0.0, 0.0)

    def test_round_trip_angles(self):
        rng = np.random.default_rng(1000)
        for pose in _random_poses(rng, 1000):
            back = rotation_to_pose(pose_to_rotation(pose))
            assert back.yaw == pytest.approx(pose.yaw, abs=1e-9)
            assert back.pitch == pytest.approx(pose.pitch, abs=1e-9)
            assert back.roll == pytest.approx(pose.roll, abs=1e-9)

    def test_round_trip_matrix(self, rng):
        for pose in _random_poses(rng, 300):
            R = pose_to_rotation(pose)
            assert np.linalg.norm(pose_to_rotation(rotation_to_pose(R)) - R) < 1e-9

    @pytest.mark.parametrize("pitch", [math.pi / 2, -math.pi / 2])
    def test_gimbal_lock(self, pitch):
        R = pose_to_rotation(CameraPose(0.3, pitch, 0.4))
        pose = rotation_to_pose(R)
        assert pose.roll == 0.0
        assert pose.pitch == pytest.approx(pitch)
        np.testing.assert_allclose(pose_to_rotation(pose), R, atol=1e-12)

    def test_rejects_non_rotation(self):
        with pytest.raises(DomainError):
            rotation_to_pose(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(DomainError):
            rotation_to_pose(np.eye(3) * 1.01)


class TestErpRays:
    def test_two_by_one(self):
        np.testing.assert_allclose(erp_pixel_to_ray(0, 0, 2, 1), [-1, 0, 0], atol=1e-15)

    def test_centre_faces_forward(self):
        for w in (2, 8, 64):
            h = w // 2
            d = erp_pixel_to_ray(w / 2 - 0.5, h / 2 - 0.5, w, h)
            np.testing.assert_allclose(d, [0, 0, 1], atol=1e-15)

    def test_forward_to_centre(self):
        u, v = ray_to_erp_pixel(np.array([0.0, 0.0, 1.0]), 64, 32)
        assert u == pytest.approx(31.5) and v == pytest.approx(15.5)

    def test_zenith_convention(self):
        u, v = ray_to_erp_pixel(np.array([0.0, 1.0, 0.0]), 64, 32)
        assert v == -0.5
        assert u == 31.5  # theta = atan2(0, 0) = 0

    def test_u_range_half_open(self):
        u, _ = ray_to_erp_pixel(np.array([0.0, 0.0, -1.0]), 64, 32)
        assert u == -0.5

    def test_grid_round_trip(self):
        w, h = 256, 128
        v, u = np.meshgrid(np.linspace(1, h - 2, 97), np.linspace(-0.5, w - 0.51, 211), indexing="ij")
        u2, v2 = ray_to_erp_pixel(erp_pixel_to_ray(u, v, w, h), w, h)
        np.testing.assert_allclose(u2, u, atol=1e-9)
        np.testing.assert_allclose(v2, v, atol=1e-9)

    def test_random_rays_round_trip(self, rng):
        w, h = 360, 180
        d = rng.standard_normal((20000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d = d[np.abs(d[:, 1]) < math.sin(math.radians(89))]
        u, v = ray_to_erp_pixel(d, w, h)
        np.testing.assert_allclose(erp_pixel_to_ray(u, v, w, h), d, atol=1e-9)

    def test_unit_norm(self):
        d = erp_rays(64, 32)
        np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)


class TestPerspectiveRays:
    def test_centre(self):
        intr = intrinsics_from_fov(1.0, 1.0, 33, 33)
        np.testing.assert_allclose(persp_pixel_to_ray(16, 16, intr), [0, 0, 1], atol=1e-15)
        u, v, ok = ray_to_persp_pixel(np.array([0, 0, 1.0]), intr)
        assert ok and u == pytest.approx(16) and v == pytest.approx(16)

    def test_top_centre_ninety(self):
        h = 64
        intr = intrinsics_from_fov(math.pi / 2, 1.0, h + 1, h)
        d = persp_pixel_to_ray(h / 2, 0, intr)
        elevation = math.degrees(math.asin(d[1]))
        half_pixel = 0.5 * 90 / h
        assert abs(elevation - 45.0) <= half_pixel

    def test_behind(self):
        intr = intrinsics_from_fov(1.0, 1.0, 16, 16)
        _, _, ok = ray_to_persp_pixel(np.array([0, 0, -1.0]), intr)
        assert not ok

    @pytest.mark.parametrize("vfov_deg", [30, 60, 90, 120])
    def test_grazing_rays(self, vfov_deg):
        intr = intrinsics_from_fov(math.radians(vfov_deg), 1.0, 32, 32)
        eps = 1e-6
        for sign in (1, -1):
            for angle, expect in ((vfov_deg / 2 + eps, False), (vfov_deg / 2 - 1e-3, True)):
                a = math.radians(angle)
                vertical = np.array([0, sign * math.sin(a), math.cos(a)])
                horizontal = np.array([sign * math.sin(a), 0, math.cos(a)])
                assert bool(ray_to_persp_pixel(vertical, intr)[2]) is expect
                assert bool(ray_to_persp_pixel(horizontal, intr)[2]) is expect

    def test_grid_round_trip(self):
        intr = intrinsics_from_fov(math.radians(75), 4 / 3, 120, 90)
        v, u = np.meshgrid(np.linspace(-0.49, 89.49, 101), np.linspace(-0.49, 119.49, 103), indexing="ij")
        u2, v2, ok = ray_to_persp_pixel(persp_pixel_to_ray(u, v, intr), intr)
        assert ok.all()
        np.testing.assert_allclose(u2, u, atol=1e-9)
        np.testing.assert_allclose(v2, v, atol=1e-9)


class TestBilinear:
    def test_integer_coordinates_exact(self, rng):
        img = rng.random((8, 16, 3))
        v, u = np.meshgrid(np.arange(8), np.arange(16), indexing="ij")
        np.testing.assert_array_equal(bilinear_sample_wrap(img, u, v), img)

    def test_wrap_blend(self, rng):
        img = rng.random((8, 16))
        got = bilinear_sample_wrap(img, np.array([15.5]), np.array([3.0]))
        assert got[0] == pytest.approx(0.5 * (img[3, 15] + img[3, 0]))

    def test_pole_clamp(self, rng):
        img = rng.random((8, 16))
        assert bilinear_sample_wrap(img, np.array([4.0]), np.array([-3.0]))[0] == img[0, 4]
        assert bilinear_sample_wrap(img, np.array([4.0]), np.array([9.5]))[0] == img[7, 4]

    def test_roll_equivalence_exhaustive(self, rng):
        img = rng.random((8, 16))
        v, u = np.meshgrid(np.linspace(-1, 8, 19), np.linspace(-3, 19, 89), indexing="ij")
        for delta in range(-16, 33):
            np.testing.assert_array_equal(
                bilinear_sample_wrap(roll_erp(img, delta), u, v), bilinear_sample_wrap(img, u - delta, v)
            )


class TestProjection:
    def test_mask_solid_angle(self):
        w, h = 512, 256
        intr = intrinsics_from_fov(math.pi / 2, 1.0, 64, 64)
        mask = frustum_mask(intr, CameraPose(), w, h)
        lat = math.pi / 2 - math.pi * (np.arange(h) + 0.5) / h
        weights = np.cos(lat)[:, None] * np.ones((1, w))
        frac = float((mask * weights).sum() / weights.sum())
        # Monte Carlo oracle: fraction of uniform directions inside the frustum.
        rng = np.random.default_rng(5)
        d = rng.standard_normal((2_000_000, 3))
        inside = (d[:, 2] > 0) & (np.abs(d[:, 0]) < d[:, 2]) & (np.abs(d[:, 1]) < d[:, 2])
        mc = inside.mean()
        assert abs(mc - 1 / 6) < 0.01 / 6
        assert abs(frac - mc) < 0.01 * mc

    def test_yaw_translates_mask(self):
        w, h = 128, 64
        intr = intrinsics_from_fov(math.radians(70), 4 / 3, 40, 30)
        base = frustum_mask(intr, CameraPose(0.0, 0.3, 0.2), w, h)
        for k in (1, 5, 40, -17):
            yaw = 2 * math.pi * k / w
            moved = frustum_mask(intr, CameraPose(yaw, 0.3, 0.2), w, h)
            mismatch = np.sum(moved != roll_erp(base, k))
            assert mismatch <= 2  # boundary pixels may flip on rounding

    def test_roll_sign_mirrors_mask(self):
        w, h = 128, 64
        intr = intrinsics_from_fov(math.radians(70), 1.0, 32, 32)
        a = frustum_mask(intr, CameraPose(0.0, 0.0, 0.4), w, h)
        b = frustum_mask(intr, CameraPose(0.0, 0.0, -0.4), w, h)
        assert np.sum(a != b[:, ::-1]) <= 2
        assert np.sum(a != b) > 20

    def test_projects_content(self, rng):
        intr = intrinsics_from_fov(math.radians(60), 1.0, 24, 24)
        persp = rng.random((24, 24, 3))
        erp, mask = project_perspective_to_erp(persp, intr, CameraPose(), 128, 64)
        assert mask.shape == (64, 128, 1)
        assert set(np.unique(mask)) == {0.0, 1.0}
        assert np.all(erp[mask[..., 0] == 0] == 0)

    def test_horizon_maps_to_equator(self):
        intr = intrinsics_from_fov(math.radians(60), 1.0, 81, 81)
        persp = np.zeros((81, 81, 1))
        persp[40] = 1.0
        w, h = 256, 128
        erp, mask = project_perspective_to_erp(persp, intr, CameraPose(), w, h)
        cols = np.where(erp[..., 0].sum(axis=0) > 0)[0]
        rows = np.arange(h)[:, None]
        centroid = (erp[:, cols, 0] * rows).sum(0) / erp[:, cols, 0].sum(0)
        assert np.all(np.abs(centroid - (h / 2 - 0.5)) <= 0.5)

    def test_pitched_horizon_curves(self):
        intr = intrinsics_from_fov(math.radians(60), 1.0, 81, 81)
        persp = np.zeros((81, 81, 1))
        persp[40] = 1.0
        w, h = 256, 128
        erp, _ = project_perspective_to_erp(persp, intr, CameraPose(0.0, math.radians(20), 0.0), w, h)
        ink = erp[..., 0]
        centre = ink[:, w // 2 - 1 : w // 2 + 1].sum(axis=1)
        row = (centre * np.arange(h)).sum() / centre.sum()
        assert row == pytest.approx(h / 2 - 0.5 - 20 * h / 180, abs=1.0)


class TestRender:
    def test_constant(self):
        erp = np.full((32, 64, 3), 0.25)
        intr = intrinsics_from_fov(1.0, 1.5, 30, 20)
        out = render_perspective_from_erp(erp, intr, CameraPose(0.5, -0.4, 1.0))
        np.testing.assert_allclose(out, 0.25, atol=1e-15)

    def test_render_project_round_trip(self, smooth_pano):
        w = smooth_pano.shape[1]
        vfov = math.radians(60)
        hp = math.ceil(2 * w / (2 * math.pi) * 2 * math.tan(vfov / 2))
        intr = intrinsics_from_fov(vfov, 1.0, hp, hp)
        pose = CameraPose(0.7, 0.25, -0.15)
        crop = render_perspective_from_erp(smooth_pano, intr, pose)
        back, mask = project_perspective_to_erp(crop, intr, pose, w, smooth_pano.shape[0])
        assert psnr(back, smooth_pano, mask=mask[..., 0][..., None].repeat(3, -1)) >= 35.0

    def test_yaw_equals_pre_roll(self, smooth_pano):
        w = smooth_pano.shape[1]
        intr = intrinsics_from_fov(math.radians(70), 1.0, 32, 32)
        for k in (3, -11, 64):
            a = render_perspective_from_erp(smooth_pano, intr, CameraPose(2 * math.pi * k / w, 0.2, 0.1))
            b = render_perspective_from_erp(roll_erp(smooth_pano, -k), intr, CameraPose(0.0, 0.2, 0.1))
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_supersample_constant(self):
        erp = np.full((32, 64), 0.5)
        intr = intrinsics_from_fov(1.0, 1.0, 8, 8)
        np.testing.assert_allclose(render_perspective_from_erp(erp, intr, CameraPose(), supersample=3), 0.5)


class TestRotateErp:
    def test_identity_bit_exact(self, smooth_pano):
        np.testing.assert_array_equal(rotate_erp(smooth_pano, np.eye(3)), smooth_pano)

    def test_inverse_round_trip(self, smooth_pano):
        R = pose_to_rotation(CameraPose(0.4, 0.35, -0.3))
        back = rotate_erp(rotate_erp(smooth_pano, R), R.T)
        assert psnr(back, smooth_pano) >= 32.0

    def test_integer_yaw_is_roll(self, smooth_pano):
        w = smooth_pano.shape[1]
        for k in (1, 7, -20, 64):
            got = rotate_erp(smooth_pano, yaw_rotation(2 * math.pi * k / w))
            np.testing.assert_allclose(got, roll_erp(smooth_pano, k), atol=1e-6)


class TestRoll:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(-200, 200), st.integers(-200, 200), st.integers(0, 2**31 - 1))
    def test_group_laws(self, a, b, seed):
        x = np.random.default_rng(seed).random((4, 16, 2))
        w = x.shape[1]
        np.testing.assert_array_equal(roll_erp(x, 0), x)
        np.testing.assert_array_equal(roll_erp(x, w), x)
        np.testing.assert_array_equal(roll_erp(roll_erp(x, a), b), roll_erp(x, (a + b) % w))
        np.testing.assert_array_equal(roll_erp(roll_erp(x, a), -a), x)

    def test_definition(self):
        x = np.arange(6)[None, :, None]
        np.testing.assert_array_equal(roll_erp(x, 2)[0, :, 0], [4, 5, 0, 1, 2, 3])


class TestGeodesic:
    def test_self(self, rng):
        for pose in _random_poses(rng, 50):
            R = pose_to_rotation(pose)
            assert geodesic_distance(R, R) == pytest.approx(0.0, abs=1e-12)

    def test_half_turn(self):
        assert geodesic_distance(np.eye(3), yaw_rotation(math.pi)) == pytest.approx(math.pi, abs=1e-7)

    def test_symmetric_and_matches_trace_formula(self, rng):
        poses = _random_poses(rng, 60)
        for a, b in zip(poses[::2], poses[1::2]):
            A, B = pose_to_rotation(a), pose_to_rotation(b)
            d = geodesic_distance(A, B)
            assert d == pytest.approx(geodesic_distance(B, A), abs=1e-12)
            ref = math.acos(np.clip((np.trace(A.T @ B) - 1) / 2, -1, 1))
            assert d == pytest.approx(ref, abs=1e-7)


class TestPng:
    @pytest.mark.parametrize("depth", [8, 16])
    @pytest.mark.parametrize("channels", [1, 3, 4])
    def test_round_trip(self, tmp_path, rng, depth, channels):
        peak = 2**depth - 1
        img = rng.integers(0, peak + 1, size=(9, 14, channels)) / peak
        write_png(tmp_path / "a.png", img, bit_depth=depth)
        np.testing.assert_array_equal(read_png(tmp_path / "a.png"), img)

    def test_linear_round_trip(self, tmp_path, rng):
        img = rng.random((4, 5, 3))
        write_png(tmp_path / "a.png", img, bit_depth=16, linear=True)
        np.testing.assert_allclose(read_png(tmp_path / "a.png", linear=True), img, atol=2e-4)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_png(tmp_path / "nope.png")
