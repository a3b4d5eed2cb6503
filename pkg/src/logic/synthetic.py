"""
Synthetic rigs for self-reconstruction experiments.

Every rig renders its targets from a hidden ground-truth cloud with the engine's own
rasterizer, so a perfect fit exists:

    blobs     8 random Gaussians seen from n_views cameras (static scene)
    stripe    a few blobs plus a thin stripe of alternating black and white
              Gaussians; the stripe region is exported as the evaluation mask
    talking   a ring-shaped face branch in front of an inside-mouth branch whose
              marked Gaussians move by A * sin(audio[0]) in every frame
"""

import numpy as np

from global_state import state
from errors import ConfigError
from data_types.camera import Camera
from data_types.cloud import GaussianCloud
from data_types.dataset import BranchModel, Dataset, Frame, SceneModel, SyntheticTruth
from data_types.enums import BRANCH, SYNTHETIC_RIG
from data_types.features import FeatureSequence
from data_types.run_config import DataConfig, RenderConfig
from logic import gsmath
from logic.compositing import composite_images
from logic.raster import rasterize_forward

WORLD_UP = (0.0, -1.0, 0.0)
CAMERA_DISTANCE = 3.0
FOCAL_PER_PIXEL = 1.25
N_BLOBS = 8
STRIPE_SEGMENTS = 12
MOUTH_AMPLITUDE = (0.0, 0.12, 0.0)


def rig_cameras(n_views: int, width: int, height: int, spread_deg: float = 40.0) -> list[Camera]:
    """Cameras on an arc around the origin, alternating slightly above and below it."""
    if n_views == 1:
        angles = np.zeros(1)
    else:
        angles = np.deg2rad(np.linspace(-spread_deg, spread_deg, n_views))
    cameras = []
    for k, theta in enumerate(angles):
        height_offset = 0.4 * (1 if k % 2 == 0 else -1) if n_views > 1 else 0.0
        eye = (CAMERA_DISTANCE * np.sin(theta), height_offset, -CAMERA_DISTANCE * np.cos(theta))
        cameras.append(gsmath.look_at(
            eye, (0.0, 0.0, 0.0), WORLD_UP, width, height,
            fx=FOCAL_PER_PIXEL * width, fy=FOCAL_PER_PIXEL * width,
        ))
    return cameras


def _cloud(positions, scales, opacities, rgb, rotations=None, sh_degree: int = 0) -> GaussianCloud:
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    colors = np.zeros((n, 3, 1 if sh_degree == 0 else 4))
    colors[:, :, 0] = gsmath.rgb_to_sh0(np.asarray(rgb, dtype=np.float64))
    if rotations is None:
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return GaussianCloud(
        positions=positions,
        raw_scales=np.log(np.asarray(scales, dtype=np.float64)),
        raw_rotations=np.asarray(rotations, dtype=np.float64),
        raw_opacities=gsmath.logit(np.asarray(opacities, dtype=np.float64)),
        colors=colors,
    )


def random_blobs(n: int, rng: np.random.Generator, radius: float = 0.6) -> GaussianCloud:
    """n opaque, randomly oriented, mildly anisotropic Gaussians inside a cube."""
    positions = rng.uniform(-radius, radius, size=(n, 3))
    scales = np.exp(rng.uniform(np.log(0.08), np.log(0.2), size=(n, 3)))
    opacities = rng.uniform(0.7, 0.95, size=n)
    rgb = rng.uniform(0.1, 0.9, size=(n, 3))
    rotations = rng.normal(size=(n, 4))
    return _cloud(positions, scales, opacities, rgb, rotations)


def random_cloud(n: int, seed: int = 0, radius: float = 0.8, sh_degree: int = 0,
                 center=(0.0, 0.0, 0.0)) -> GaussianCloud:
    """
    Random initialization for fitting: n grey, half-transparent, isotropic Gaussians
    spread uniformly in a cube.
    """
    rng = np.random.default_rng(seed)
    positions = np.asarray(center) + rng.uniform(-radius, radius, size=(n, 3))
    scales = np.full((n, 3), 0.25 * radius)
    rgb = 0.5 + rng.uniform(-0.05, 0.05, size=(n, 3))
    return _cloud(positions, scales, np.full(n, 0.5), rgb, sh_degree=sh_degree)


def render_targets(cloud: GaussianCloud, cameras: list[Camera], cfg: RenderConfig = None) -> list[np.ndarray]:
    cfg = cfg or RenderConfig()
    return [rasterize_forward(cloud, camera, cfg).image for camera in cameras]


def make_blobs(data: DataConfig) -> Dataset:
    rng = np.random.default_rng(data.seed)
    truth = random_blobs(N_BLOBS, rng)
    cameras = rig_cameras(data.n_views, data.width, data.height)
    frames = [
        Frame(camera=camera, image=image, face_mask=np.ones((data.height, data.width)), name=f"view_{k:04d}")
        for k, (camera, image) in enumerate(zip(cameras, render_targets(truth, cameras)))
    ]
    return Dataset(frames=frames, truth=SyntheticTruth(face=truth))


def stripe_cloud(rng: np.random.Generator, segments: int = STRIPE_SEGMENTS) -> GaussianCloud:
    """Thin horizontal stripe of alternating black and white elongated Gaussians."""
    xs = np.linspace(-0.55, 0.55, segments)
    positions = np.stack([xs, np.full(segments, 0.15), np.zeros(segments)], axis=1)
    scales = np.tile([0.035, 0.012, 0.012], (segments, 1))
    rgb = np.where((np.arange(segments) % 2 == 0)[:, None], 0.95, 0.05) * np.ones((segments, 3))
    return _cloud(positions, scales, np.full(segments, 0.95), rgb)


def make_stripe(data: DataConfig) -> Dataset:
    rng = np.random.default_rng(data.seed)
    blobs = random_blobs(4, rng)
    blobs = blobs.with_params(positions=blobs.positions + np.array([0.0, -0.35, 0.3]))
    stripe = stripe_cloud(rng)
    truth = GaussianCloud.concat([blobs, stripe])
    cameras = rig_cameras(data.n_views, data.width, data.height, spread_deg=25.0)
    frames = [
        Frame(camera=camera, image=image, face_mask=np.ones((data.height, data.width)), name=f"view_{k:04d}")
        for k, (camera, image) in enumerate(zip(cameras, render_targets(truth, cameras)))
    ]
    stripe_alpha = rasterize_forward(stripe, cameras[0]).alpha
    eval_mask = (stripe_alpha > 0.3).astype(np.float64)
    if not eval_mask.any():
        state.logger.warning("Stripe is not visible in the first view; evaluating on the whole image")
        eval_mask[:] = 1.0
    return Dataset(frames=frames, truth=SyntheticTruth(face=truth, eval_mask=eval_mask))


def talking_features(n_frames: int, seed: int = 0) -> FeatureSequence:
    """
    Audio rows (a0, a1) with a0 a slow oscillation that drives the mouth, and
    expression rows of two smooth, unrelated signals.
    """
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    f = np.arange(n_frames, dtype=np.float64)
    a0 = 1.4 * np.sin(2.0 * np.pi * f / 12.0 + phase)
    audio = np.stack([a0, np.cos(2.0 * np.pi * f / 12.0 + phase)], axis=1)
    expression = np.stack([0.3 * np.sin(f / 5.0), 0.3 * np.cos(f / 7.0)], axis=1)
    return FeatureSequence(audio=audio, expression=expression)


def talking_truth(seed: int = 0) -> SyntheticTruth:
    rng = np.random.default_rng(seed)
    k = 10
    angles = 2.0 * np.pi * np.arange(k) / k
    face_pos = np.stack([0.7 * np.cos(angles), 0.7 * np.sin(angles), np.zeros(k)], axis=1)
    face = _cloud(face_pos, np.full((k, 3), 0.22), np.full(k, 0.95), rng.uniform(0.5, 0.9, size=(k, 3)))

    m = 6
    mouth_pos = np.array([0.0, 0.0, 0.5]) + rng.uniform(-0.2, 0.2, size=(m, 3)) * np.array([1.0, 1.0, 0.2])
    mouth = _cloud(mouth_pos, np.full((m, 3), 0.08), np.full(m, 0.9), rng.uniform(0.1, 0.5, size=(m, 3)))
    marked = np.zeros(m, dtype=bool)
    marked[: m // 2] = True
    return SyntheticTruth(face=face, mouth=mouth, marked=marked, amplitude=np.asarray(MOUTH_AMPLITUDE))


def make_talking(data: DataConfig) -> Dataset:
    truth = talking_truth(data.seed)
    features = talking_features(data.n_frames, data.seed)
    cameras = rig_cameras(min(data.n_views, 3), data.width, data.height, spread_deg=10.0)
    frames = []
    for f in range(data.n_frames):
        camera = cameras[f % len(cameras)]
        mouth = truth.mouth.with_params(positions=truth.mouth_positions(features.audio[f]))
        face_render = rasterize_forward(truth.face, camera)
        mouth_render = rasterize_forward(mouth, camera)
        image = composite_images(face_render.image, face_render.alpha, mouth_render.image)
        face_mask = (face_render.alpha > 0.5).astype(np.float64)
        frames.append(Frame(
            camera=camera, image=image, face_mask=face_mask, mouth_mask=1.0 - face_mask,
            feature_index=f, name=f"frame_{f:04d}",
        ))
    return Dataset(frames=frames, features=features, truth=truth)


RIGS = {
    SYNTHETIC_RIG.BLOBS: make_blobs,
    SYNTHETIC_RIG.STRIPE: make_stripe,
    SYNTHETIC_RIG.TALKING: make_talking,
}


def make_rig(rig: SYNTHETIC_RIG, data: DataConfig = None) -> Dataset:
    """
    Generate a synthetic dataset.

    Args:
        rig (SYNTHETIC_RIG | str): Which rig
        data (DataConfig, optional): Size, view count, frame count and seed

    Returns:
        Dataset: Frames with masks, features for the talking rig, and the ground truth

    Raises:
        ConfigError: If the rig name is unknown
    """
    data = data or DataConfig()
    if isinstance(rig, str):
        try:
            rig = SYNTHETIC_RIG(rig)
        except ValueError:
            raise ConfigError(f"Unknown synthetic rig '{rig}'. Expected one of: {[r.value for r in SYNTHETIC_RIG]}")
    dataset = RIGS[rig](data)
    state.logger.info(f"Generated synthetic rig '{rig.value}' with {len(dataset.frames)} frames")
    return dataset


def scene_from_truth(truth: SyntheticTruth, extent: float = 1.0) -> SceneModel:
    """Scene whose canonical clouds are the hidden ground truth."""
    mouth = BranchModel(BRANCH.MOUTH, truth.mouth.copy()) if truth.mouth is not None else None
    return SceneModel(face=BranchModel(BRANCH.FACE, truth.face.copy()), mouth=mouth, extent=extent)
