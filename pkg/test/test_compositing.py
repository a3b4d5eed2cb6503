from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ContractViolation
from data_types.run_config import RenderConfig
from logic.compositing import composite_backward, composite_head, composite_images
from logic.raster import rasterize_forward
from logic.synthetic import random_blobs, rig_cameras
from conftest import axis_camera, build_cloud


def test_opaque_face_hides_the_mouth():
    face = np.full((4, 4, 3), 0.3)
    mouth = np.full((4, 4, 3), 0.9)
    assert_allclose(composite_images(face, np.ones((4, 4)), mouth), face)
    assert_allclose(composite_images(face, np.zeros((4, 4)), mouth), mouth)
    assert_allclose(composite_images(face, np.full((4, 4), 0.5), mouth), 0.5 * face + 0.5 * mouth)


def test_size_mismatch_raises():
    with pytest.raises(ContractViolation):
        composite_images(np.zeros((4, 4, 3)), np.zeros((4, 4)), np.zeros((4, 5, 3)))


def test_backward_splits_by_face_alpha():
    alpha = np.random.default_rng(0).uniform(size=(3, 3))
    d_head = np.random.default_rng(1).normal(size=(3, 3, 3))
    d_face, d_mouth = composite_backward(SimpleNamespace(alpha=alpha), None, d_head)
    assert_allclose(d_face + d_mouth, d_head)
    assert_allclose(d_face, d_head * alpha[:, :, None])


def test_head_of_an_unseen_face_is_the_mouth():
    camera = axis_camera(32, 32)
    cfg = RenderConfig(background=(0.0, 0.0, 0.0))
    face = rasterize_forward(build_cloud([[0.0, 0.0, -3.0]]), camera, cfg)
    mouth = rasterize_forward(build_cloud([[0.0, 0.0, 3.0]], log_scale=-1.5, rgb=(0.8, 0.1, 0.1)), camera, cfg)
    assert_allclose(composite_head(face, mouth), mouth.image)


@pytest.mark.parametrize("seed", range(50))
def test_head_pixels_stay_between_face_and_mouth(seed):
    rng = np.random.default_rng(seed)
    cam = rig_cameras(4, 24, 24)[seed % 4]
    face = rasterize_forward(random_blobs(int(rng.integers(1, 12)), rng, radius=0.8), cam,
                             RenderConfig(background=(0.0, 0.0, 0.0)))
    mouth_background = tuple(float(v) for v in rng.uniform(0, 1, 3))
    mouth = rasterize_forward(random_blobs(int(rng.integers(1, 12)), rng, radius=0.4), cam,
                              RenderConfig(background=mouth_background))
    head = composite_head(face, mouth)
    low = np.minimum(face.image, mouth.image)
    high = np.maximum(face.image, mouth.image)
    assert np.all(head >= low - 1e-12)
    assert np.all(head <= high + 1e-12)
    uncovered = face.alpha == 0.0
    assert_allclose(head[uncovered], mouth.image[uncovered], rtol=0, atol=0)
