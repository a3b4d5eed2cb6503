"""
Gaussian primitive math.

Activations of the raw cloud parameters, covariance assembly, EWA projection into
screen space and the view-dependent color model, each with the analytic backward
pass the rasterizer chains through.

Pixel convention: the center of pixel (i, j) sits at (i, j), so the image rectangle
spans [-0.5, W - 0.5] and x_ndc = 2 (x_px + 0.5) / W - 1.

All functions are pure over their inputs and safe to call from several threads.
"""

import numpy as np

from global_state import state
from errors import DegenerateInputError
from data_types.camera import Camera, Projected2D, ProjectedCloud
from data_types.cloud import GaussianCloud

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_OFFSET = 0.5

LOWPASS = 0.3
FRUSTUM_CLAMP = 1.3
RADIUS_SIGMAS = 3.0


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def normalize_quaternions(raw_q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Normalize quaternions row-wise.

    Args:
        raw_q (np.ndarray): (N, 4) unnormalized (w, x, y, z)

    Returns:
        tuple: unit quaternions (N, 4) and norms (N,)

    Raises:
        DegenerateInputError: If any quaternion has zero norm
    """
    raw_q = np.atleast_2d(np.asarray(raw_q, dtype=np.float64))
    norms = np.linalg.norm(raw_q, axis=1)
    if np.any(norms <= 0.0) or not np.all(np.isfinite(norms)):
        bad = np.flatnonzero(~(norms > 0.0)).tolist()
        state.logger.error(f"Zero-norm quaternion at rows {bad[:10]}")
        raise DegenerateInputError(f"Zero-norm quaternion at rows {bad[:10]}")
    return raw_q / norms[:, None], norms


def activate(cloud: GaussianCloud) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Map raw parameters to their constrained values.

    Returns:
        tuple: scales (N, 3) = exp(raw_scales), unit quaternions (N, 4),
            opacities (N,) = sigmoid(raw_opacities)
    """
    quats, _ = normalize_quaternions(cloud.raw_rotations)
    return np.exp(cloud.raw_scales), quats, sigmoid(cloud.raw_opacities)


def _rotation_from_unit(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rot = np.empty((q.shape[0], 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (x * z + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (x * z - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def quat_to_rotation_batch(raw_q: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) of unnormalized quaternions (N, 4)."""
    quats, _ = normalize_quaternions(raw_q)
    return _rotation_from_unit(quats)


def quat_to_rotation(raw_q) -> np.ndarray:
    """
    Rotation matrix of one unnormalized quaternion (w, x, y, z).

    Args:
        raw_q: 4-vector, any nonzero norm

    Returns:
        np.ndarray: (3, 3) proper rotation

    Raises:
        DegenerateInputError: If the quaternion has zero norm
    """
    return quat_to_rotation_batch(np.asarray(raw_q, dtype=np.float64).reshape(1, 4))[0]


def rotation_backward(raw_q: np.ndarray, d_rot: np.ndarray) -> np.ndarray:
    """
    Carry dL/dR back to the unnormalized quaternion.

    Args:
        raw_q (np.ndarray): (N, 4) raw quaternions
        d_rot (np.ndarray): (N, 3, 3) gradient w.r.t. the rotation matrices

    Returns:
        np.ndarray: (N, 4) gradient w.r.t. raw_q
    """
    q, norms = normalize_quaternions(raw_q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = d_rot
    dq = np.empty_like(q)
    dq[:, 0] = 2 * z * (g[:, 1, 0] - g[:, 0, 1]) + 2 * y * (g[:, 0, 2] - g[:, 2, 0]) + 2 * x * (g[:, 2, 1] - g[:, 1, 2])
    dq[:, 1] = (2 * y * (g[:, 0, 1] + g[:, 1, 0]) + 2 * z * (g[:, 0, 2] + g[:, 2, 0])
                + 2 * w * (g[:, 2, 1] - g[:, 1, 2]) - 4 * x * (g[:, 1, 1] + g[:, 2, 2]))
    dq[:, 2] = (2 * x * (g[:, 0, 1] + g[:, 1, 0]) + 2 * w * (g[:, 0, 2] - g[:, 2, 0])
                + 2 * z * (g[:, 1, 2] + g[:, 2, 1]) - 4 * y * (g[:, 0, 0] + g[:, 2, 2]))
    dq[:, 3] = (2 * w * (g[:, 1, 0] - g[:, 0, 1]) + 2 * x * (g[:, 0, 2] + g[:, 2, 0])
                + 2 * y * (g[:, 1, 2] + g[:, 2, 1]) - 4 * z * (g[:, 0, 0] + g[:, 1, 1]))
    # through q = raw / |raw|
    radial = np.sum(dq * q, axis=1, keepdims=True)
    return (dq - q * radial) / norms[:, None]


def build_covariance_batch(raw_scales: np.ndarray, raw_q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    World covariances Sigma = R S S^T R^T.

    Returns:
        tuple: cov3d (N, 3, 3), rotations (N, 3, 3), scales (N, 3)
    """
    rotations = quat_to_rotation_batch(raw_q)
    scales = np.exp(np.atleast_2d(raw_scales))
    m = rotations * scales[:, None, :]
    cov = m @ np.transpose(m, (0, 2, 1))
    return 0.5 * (cov + np.transpose(cov, (0, 2, 1))), rotations, scales


def build_covariance(raw_scale, raw_q) -> np.ndarray:
    """
    Covariance of one Gaussian from its raw scale and raw quaternion.

    Args:
        raw_scale: 3-vector of log-scales
        raw_q: 4-vector quaternion (w, x, y, z)

    Returns:
        np.ndarray: (3, 3) symmetric positive definite matrix with eigenvalues exp(raw_scale)^2
    """
    cov, _, _ = build_covariance_batch(
        np.asarray(raw_scale, dtype=np.float64).reshape(1, 3),
        np.asarray(raw_q, dtype=np.float64).reshape(1, 4),
    )
    return cov[0]


def covariance_backward(raw_scales: np.ndarray, raw_q: np.ndarray, rotations: np.ndarray,
                        scales: np.ndarray, d_cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Carry dL/dSigma back to raw scales and raw quaternions.

    Returns:
        tuple: (N, 3) d raw_scales, (N, 4) d raw_rotations
    """
    m = rotations * scales[:, None, :]
    d_m = (d_cov + np.transpose(d_cov, (0, 2, 1))) @ m
    d_scales = np.sum(d_m * rotations, axis=1)
    d_rot = d_m * scales[:, None, :]
    return d_scales * scales, rotation_backward(raw_q, d_rot)


def pixel_to_ndc(px: np.ndarray, size: float) -> np.ndarray:
    return 2.0 * (np.asarray(px) + 0.5) / size - 1.0


def ndc_to_pixel(ndc: np.ndarray, size: float) -> np.ndarray:
    return (np.asarray(ndc) + 1.0) * size / 2.0 - 0.5


def camera_center(camera: Camera) -> np.ndarray:
    return camera.center


def screen_radius(cov2d: np.ndarray) -> np.ndarray:
    """ceil(3 sqrt(lambda_max)) of (N, 2, 2) covariances."""
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    return np.ceil(RADIUS_SIGMAS * np.sqrt(np.maximum(lam_max, 0.0)))


def project_cloud(cloud: GaussianCloud, camera: Camera, lowpass: float = LOWPASS) -> ProjectedCloud:
    """
    Project every Gaussian of a cloud into a camera.

    The EWA Jacobian is the local affine approximation of the perspective map at the
    mean, with the camera-space ratios x/z and y/z clamped to 1.3 times the frustum
    half-extent.

    Args:
        cloud (GaussianCloud): Cloud to project
        camera (Camera): Target view
        lowpass (float): Term added to the diagonal of every screen covariance

    Returns:
        ProjectedCloud: Screen-space quantities and intermediates for backward
    """
    n = cloud.n
    t_cam = cloud.positions @ camera.rotation.T + camera.translation
    tz = t_cam[:, 2]
    culled = tz <= camera.near
    safe_z = np.where(culled, 1.0, tz)

    center_px = np.empty((n, 2))
    center_px[:, 0] = camera.fx * t_cam[:, 0] / safe_z + camera.cx
    center_px[:, 1] = camera.fy * t_cam[:, 1] / safe_z + camera.cy
    center_ndc = np.stack([pixel_to_ndc(center_px[:, 0], camera.width),
                           pixel_to_ndc(center_px[:, 1], camera.height)], axis=1)

    lim_x = FRUSTUM_CLAMP * 0.5 * camera.width / camera.fx
    lim_y = FRUSTUM_CLAMP * 0.5 * camera.height / camera.fy
    u = t_cam[:, 0] / safe_z
    v = t_cam[:, 1] / safe_z
    clamp_x = np.abs(u) > lim_x
    clamp_y = np.abs(v) > lim_y
    u = np.clip(u, -lim_x, lim_x)
    v = np.clip(v, -lim_y, lim_y)

    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = camera.fx / safe_z
    jac[:, 0, 2] = -camera.fx * u / safe_z
    jac[:, 1, 1] = camera.fy / safe_z
    jac[:, 1, 2] = -camera.fy * v / safe_z

    cov3d, rotations, scales = build_covariance_batch(cloud.raw_scales, cloud.raw_rotations)
    t_mat = jac @ camera.rotation
    cov2d = t_mat @ cov3d @ np.transpose(t_mat, (0, 2, 1))
    cov2d = 0.5 * (cov2d + np.transpose(cov2d, (0, 2, 1)))
    cov2d[:, 0, 0] += lowpass
    cov2d[:, 1, 1] += lowpass

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    culled = culled | ~(det > 0.0)
    safe_det = np.where(culled, 1.0, det)
    conic = np.empty_like(cov2d)
    conic[:, 0, 0] = cov2d[:, 1, 1] / safe_det
    conic[:, 1, 1] = cov2d[:, 0, 0] / safe_det
    conic[:, 0, 1] = -cov2d[:, 0, 1] / safe_det
    conic[:, 1, 0] = -cov2d[:, 1, 0] / safe_det
    conic[culled] = 0.0

    radius = np.where(culled, 0.0, screen_radius(cov2d))
    return ProjectedCloud(
        center_px=center_px,
        center_ndc=center_ndc,
        depth=tz.copy(),
        cov2d=cov2d,
        conic=conic,
        radius=radius,
        culled=culled,
        t_cam=t_cam,
        jacobian=jac,
        clamp_x=clamp_x,
        clamp_y=clamp_y,
        cov3d=cov3d,
        rotations=rotations,
        scales=scales,
    )


def project(cloud: GaussianCloud, camera: Camera, index: int = 0, lowpass: float = LOWPASS) -> Projected2D:
    """
    Project a single Gaussian of a cloud.

    Args:
        cloud (GaussianCloud): Cloud holding the Gaussian
        camera (Camera): Target view
        index (int): Row of the Gaussian
        lowpass (float): Screen-space low-pass term

    Returns:
        Projected2D: Footprint; culled when the mean is at or before the near plane
    """
    return project_cloud(cloud.take(np.array([index])), camera, lowpass).entry(0)


def project_backward(cloud: GaussianCloud, camera: Camera, proj: ProjectedCloud,
                     d_center_px: np.ndarray, d_cov2d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Carry screen-space gradients back to the world parameters.

    Args:
        cloud (GaussianCloud): Projected cloud
        camera (Camera): View used for the projection
        proj (ProjectedCloud): Output of project_cloud on the same inputs
        d_center_px (np.ndarray): (N, 2) dL/d(center_px)
        d_cov2d (np.ndarray): (N, 2, 2) dL/d(cov2d), entries treated independently

    Returns:
        tuple: dL/d positions (N, 3), dL/d raw_scales (N, 3), dL/d raw_rotations (N, 4);
            zero rows for culled Gaussians
    """
    live = ~proj.culled
    t = proj.t_cam
    tz = np.where(live, t[:, 2], 1.0)
    fx, fy = camera.fx, camera.fy
    d_t = np.zeros_like(t)

    # mean
    d_t[:, 0] += d_center_px[:, 0] * fx / tz
    d_t[:, 1] += d_center_px[:, 1] * fy / tz
    d_t[:, 2] += -(d_center_px[:, 0] * fx * t[:, 0] + d_center_px[:, 1] * fy * t[:, 1]) / tz ** 2

    # covariance: cov2d = T Sigma T^T with T = J W
    t_mat = proj.jacobian @ camera.rotation
    d_t_mat = d_cov2d @ t_mat @ np.transpose(proj.cov3d, (0, 2, 1)) + np.transpose(d_cov2d, (0, 2, 1)) @ t_mat @ proj.cov3d
    d_cov3d = np.transpose(t_mat, (0, 2, 1)) @ d_cov2d @ t_mat
    d_jac = d_t_mat @ camera.rotation.T

    u = -proj.jacobian[:, 0, 2] * tz / fx
    v = -proj.jacobian[:, 1, 2] * tz / fy
    du_dx = np.where(proj.clamp_x, 0.0, 1.0 / tz)
    du_dz = np.where(proj.clamp_x, 0.0, -t[:, 0] / tz ** 2)
    dv_dy = np.where(proj.clamp_y, 0.0, 1.0 / tz)
    dv_dz = np.where(proj.clamp_y, 0.0, -t[:, 1] / tz ** 2)

    d_t[:, 2] += -d_jac[:, 0, 0] * fx / tz ** 2 - d_jac[:, 1, 1] * fy / tz ** 2
    # J02 = -fx u / z
    d_t[:, 0] += d_jac[:, 0, 2] * (-fx / tz) * du_dx
    d_t[:, 2] += d_jac[:, 0, 2] * (-fx) * (du_dz / tz - u / tz ** 2)
    # J12 = -fy v / z
    d_t[:, 1] += d_jac[:, 1, 2] * (-fy / tz) * dv_dy
    d_t[:, 2] += d_jac[:, 1, 2] * (-fy) * (dv_dz / tz - v / tz ** 2)

    d_t[~live] = 0.0
    d_cov3d[~live] = 0.0
    d_positions = d_t @ camera.rotation
    d_raw_scales, d_raw_rotations = covariance_backward(
        cloud.raw_scales, cloud.raw_rotations, proj.rotations, proj.scales, d_cov3d
    )
    return d_positions, d_raw_scales, d_raw_rotations


def view_directions(positions: np.ndarray, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit directions from the camera center to each mean.

    Returns:
        tuple: directions (N, 3) and distances (N,)
    """
    offset = positions - camera.center
    dist = np.linalg.norm(offset, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    return offset / safe[:, None], safe


def eval_sh(colors: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Evaluate degree 0/1 real spherical harmonics.

    Args:
        colors (np.ndarray): (N, 3, B) coefficients, B in {1, 4}
        dirs (np.ndarray): (N, 3) unit view directions

    Returns:
        tuple: rgb (N, 3) clamped to [0, 1] and a (N, 3) bool mask of clamped channels
    """
    rgb = SH_C0 * colors[:, :, 0]
    if colors.shape[2] == 4:
        x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
        rgb = rgb - SH_C1 * y * colors[:, :, 1] + SH_C1 * z * colors[:, :, 2] - SH_C1 * x * colors[:, :, 3]
    rgb = rgb + SH_OFFSET
    clamped = (rgb < 0.0) | (rgb > 1.0)
    return np.clip(rgb, 0.0, 1.0), clamped


def eval_sh_backward(colors: np.ndarray, dirs: np.ndarray, clamped: np.ndarray,
                     d_rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        tuple: dL/d colors (N, 3, B) and dL/d dirs (N, 3)
    """
    g = np.where(clamped, 0.0, d_rgb)
    d_colors = np.zeros_like(colors)
    d_colors[:, :, 0] = SH_C0 * g
    d_dirs = np.zeros_like(dirs)
    if colors.shape[2] == 4:
        x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
        d_colors[:, :, 1] = -SH_C1 * y * g
        d_colors[:, :, 2] = SH_C1 * z * g
        d_colors[:, :, 3] = -SH_C1 * x * g
        d_dirs[:, 0] = -SH_C1 * np.sum(g * colors[:, :, 3], axis=1)
        d_dirs[:, 1] = -SH_C1 * np.sum(g * colors[:, :, 1], axis=1)
        d_dirs[:, 2] = SH_C1 * np.sum(g * colors[:, :, 2], axis=1)
    return d_colors, d_dirs


def direction_backward(dirs: np.ndarray, dist: np.ndarray, d_dirs: np.ndarray) -> np.ndarray:
    """dL/d positions from dL/d dirs, dirs = (mu - c) / |mu - c|."""
    radial = np.sum(d_dirs * dirs, axis=1, keepdims=True)
    return (d_dirs - dirs * radial) / dist[:, None]


def rgb_to_sh0(rgb: np.ndarray) -> np.ndarray:
    """Degree-0 coefficient reproducing a color."""
    return (np.asarray(rgb, dtype=np.float64) - SH_OFFSET) / SH_C0


def look_at(eye, target, up, width: int, height: int, fx: float, fy: float,
            cx: float = None, cy: float = None, near: float = 0.2) -> Camera:
    """
    Build a camera at eye looking at target.

    The camera frame has x right, y down and z forward; `up` is the world direction
    that appears upward in the image.

    Raises:
        DegenerateInputError: If eye equals target or up is parallel to the view direction
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm <= 0.0:
        raise DegenerateInputError("look_at: eye and target coincide")
    forward = forward / norm
    down = -np.asarray(up, dtype=np.float64)
    right = np.cross(down, forward)
    if np.linalg.norm(right) < 1e-9:
        raise DegenerateInputError("look_at: up vector is parallel to the view direction")
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    return Camera(
        fx=fx, fy=fy,
        cx=(width - 1) / 2.0 if cx is None else cx,
        cy=(height - 1) / 2.0 if cy is None else cy,
        rotation=rotation,
        translation=-rotation @ eye,
        width=width, height=height, near=near,
    )


def scene_extent(cameras: list[Camera]) -> float:
    """
    Radius of the bounding sphere of the camera centers about their mean.

    Falls back to 1.0 when fewer than two distinct centers exist.
    """
    if not cameras:
        state.logger.warning("scene_extent: no cameras, using 1.0")
        return 1.0
    centers = np.stack([c.center for c in cameras])
    radius = float(np.max(np.linalg.norm(centers - centers.mean(axis=0), axis=1)))
    if radius < 1e-9:
        state.logger.warning("scene_extent: fewer than two distinct camera centers, using 1.0")
        return 1.0
    return radius
