import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from errors import DegenerateInputError
from data_types.camera import Camera
from logic import gsmath
from conftest import axis_camera, build_cloud

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
quat = st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=4, max_size=4).filter(
    lambda q: np.linalg.norm(q) > 1e-3
)


def test_identity_quaternion_is_identity():
    assert_allclose(gsmath.quat_to_rotation([1, 0, 0, 0]), np.eye(3))


def test_half_turn_about_z():
    assert_allclose(gsmath.quat_to_rotation([0, 0, 0, 1]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


def test_quaternion_scale_is_ignored():
    assert_allclose(gsmath.quat_to_rotation([2, 0, 0, 0]), np.eye(3))


def test_zero_quaternion_raises():
    with pytest.raises(DegenerateInputError):
        gsmath.quat_to_rotation([0, 0, 0, 0])


@given(quat)
def test_rotation_is_proper(q):
    rot = gsmath.quat_to_rotation(q)
    assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)


def test_unit_isotropic_covariance():
    assert_allclose(gsmath.build_covariance([0, 0, 0], [1, 0, 0, 0]), np.eye(3))


def test_scaled_axis_covariance():
    assert_allclose(gsmath.build_covariance([np.log(2.0), 0, 0], [1, 0, 0, 0]), np.diag([4.0, 1.0, 1.0]))


@settings(max_examples=50)
@given(st.lists(finite, min_size=3, max_size=3), quat)
def test_covariance_eigenvalues_are_squared_scales(raw_scale, q):
    cov = gsmath.build_covariance(raw_scale, q)
    assert_allclose(cov, cov.T, atol=0.0)
    eig = np.sort(np.linalg.eigvalsh(cov))
    expected = np.sort(np.exp(np.asarray(raw_scale)) ** 2)
    assert np.all(eig > 0)
    assert_allclose(eig, expected, rtol=1e-9, atol=1e-12)


def test_gaussian_on_axis_projects_to_principal_point(camera):
    p = gsmath.project(build_cloud([[0.0, 0.0, 4.0]]), camera)
    assert not p.culled
    assert_allclose(p.center_px, [camera.cx, camera.cy])
    assert p.depth_cam == pytest.approx(4.0)


def test_radius_halves_with_double_depth(camera):
    near = gsmath.project(build_cloud([[0.0, 0.0, 5.0]], log_scale=0.0), camera)
    far = gsmath.project(build_cloud([[0.0, 0.0, 10.0]], log_scale=0.0), camera)
    assert near.radius_px / far.radius_px == pytest.approx(2.0, abs=0.1)


def test_behind_near_plane_is_culled(camera):
    p = gsmath.project(build_cloud([[0.0, 0.0, camera.near / 2]]), camera)
    assert p.culled


def test_projected_covariance_is_symmetric_positive_definite(blob_scene):
    cloud, cam = blob_scene
    proj = gsmath.project_cloud(cloud, cam)
    live = ~proj.culled
    assert live.any()
    assert_allclose(proj.cov2d, np.transpose(proj.cov2d, (0, 2, 1)), atol=0.0)
    assert np.all(np.linalg.eigvalsh(proj.cov2d[live]) > 0)
    assert np.all(proj.radius[live] > 0)


@given(st.floats(min_value=-0.5, max_value=63.5), st.integers(min_value=1, max_value=512))
def test_ndc_mapping_is_a_bijection(px, size):
    px = min(px, size - 0.5)
    ndc = gsmath.pixel_to_ndc(px, size)
    assert -1.0 - 1e-12 <= ndc <= 1.0 + 1e-12
    assert gsmath.ndc_to_pixel(ndc, size) == pytest.approx(px, abs=1e-9)


def test_ndc_corners():
    assert gsmath.pixel_to_ndc(-0.5, 64) == pytest.approx(-1.0)
    assert gsmath.pixel_to_ndc(63.5, 64) == pytest.approx(1.0)


def test_look_at_points_the_camera_at_the_target():
    cam = gsmath.look_at((0, 0, -3), (0, 0, 0), (0, -1, 0), 32, 32, 40.0, 40.0)
    assert_allclose(cam.center, [0, 0, -3], atol=1e-12)
    p = gsmath.project(build_cloud([[0.0, 0.0, 0.0]]), cam)
    assert_allclose(p.center_px, [cam.cx, cam.cy], atol=1e-9)


def test_look_at_rejects_coincident_eye_and_target():
    with pytest.raises(DegenerateInputError):
        gsmath.look_at((1, 1, 1), (1, 1, 1), (0, -1, 0), 8, 8, 10.0, 10.0)


def test_camera_rejects_reflection():
    with pytest.raises(DegenerateInputError):
        Camera(fx=10, fy=10, cx=4, cy=4, rotation=np.diag([1.0, 1.0, -1.0]), translation=np.zeros(3),
               width=8, height=8)


def test_scene_extent_of_a_single_camera_falls_back_to_one():
    assert gsmath.scene_extent([axis_camera()]) == 1.0


def test_scene_extent_is_bounding_radius():
    cams = [gsmath.look_at((x, 0, -3), (0, 0, 0), (0, -1, 0), 8, 8, 10.0, 10.0) for x in (-1.0, 1.0)]
    assert gsmath.scene_extent(cams) == pytest.approx(1.0)


def test_sh_degree_zero_color():
    colors = np.zeros((1, 3, 1))
    colors[0, :, 0] = gsmath.rgb_to_sh0([0.2, 0.5, 0.8])
    rgb, clamped = gsmath.eval_sh(colors, np.array([[0.0, 0.0, 1.0]]))
    assert_allclose(rgb[0], [0.2, 0.5, 0.8])
    assert not clamped.any()


def test_activations_are_constrained(blob_scene):
    cloud, _ = blob_scene
    scales, quats, opacities = gsmath.activate(cloud)
    assert np.all(scales > 0)
    assert_allclose(np.linalg.norm(quats, axis=1), 1.0)
    assert np.all((opacities > 0) & (opacities < 1))


def test_project_backward_matches_finite_differences(camera):
    cloud = build_cloud([[0.3, -0.2, 4.0]], log_scale=[[-1.5, -1.2, -1.8]])
    cloud.raw_rotations[0] = [0.9, 0.2, -0.3, 0.1]
    weights_c = np.array([[0.7, -0.4]])
    weights_cov = np.array([[[0.3, 0.1], [0.1, -0.2]]])

    def objective(c):
        proj = gsmath.project_cloud(c, camera)
        return np.sum(proj.center_px * weights_c) + np.sum(proj.cov2d * weights_cov)

    proj = gsmath.project_cloud(cloud, camera)
    d_pos, d_scale, d_rot = gsmath.project_backward(cloud, camera, proj, weights_c, weights_cov)
    h = 1e-5
    for name, analytic in (("positions", d_pos), ("raw_scales", d_scale), ("raw_rotations", d_rot)):
        for j in range(analytic.shape[1]):
            plus, minus = cloud.copy(), cloud.copy()
            getattr(plus, name)[0, j] += h
            getattr(minus, name)[0, j] -= h
            numeric = (objective(plus) - objective(minus)) / (2 * h)
            assert analytic[0, j] == pytest.approx(numeric, rel=1e-4, abs=1e-6), (name, j)
