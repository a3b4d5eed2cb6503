import numpy as np
import pytest

from data_types.camera import Camera
from data_types.cloud import GaussianCloud
from data_types.run_config import RenderConfig
from logic import gsmath
from logic.synthetic import random_blobs, rig_cameras


def build_cloud(positions, log_scale=-2.5, opacity=0.8, rgb=0.5, sh_degree: int = 0) -> GaussianCloud:
    """Axis-aligned Gaussians with shared or per-row scale, opacity and color."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = positions.shape[0]
    colors = np.zeros((n, 3, 1 if sh_degree == 0 else 4))
    colors[:, :, 0] = gsmath.rgb_to_sh0(np.broadcast_to(np.asarray(rgb, dtype=np.float64), (n, 3)))
    return GaussianCloud(
        positions=positions,
        raw_scales=np.broadcast_to(np.asarray(log_scale, dtype=np.float64), (n, 3)).copy(),
        raw_rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        raw_opacities=gsmath.logit(np.broadcast_to(np.asarray(opacity, dtype=np.float64), (n,)).copy()),
        colors=colors,
    )


def axis_camera(width: int = 64, height: int = 64, focal: float = 80.0) -> Camera:
    """Camera at the origin looking down +z."""
    return Camera(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                  rotation=np.eye(3), translation=np.zeros(3), width=width, height=height)


@pytest.fixture
def make_cloud():
    return build_cloud


@pytest.fixture
def camera() -> Camera:
    return axis_camera()


@pytest.fixture
def render_cfg() -> RenderConfig:
    return RenderConfig()


@pytest.fixture
def blob_scene():
    """Eight random blobs and a camera looking at them from the rig arc."""
    cloud = random_blobs(8, np.random.default_rng(3))
    return cloud, rig_cameras(3, 48, 48)[1]


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    directory = tmp_path / "logs"
    monkeypatch.setenv("PGST_LOG_DIR", str(directory))
    monkeypatch.setenv("PGST_PROGRESS", "0")
    monkeypatch.setenv("MODE", "production")
    return directory
