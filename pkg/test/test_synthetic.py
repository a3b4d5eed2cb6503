import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import ConfigError
from data_types.enums import SYNTHETIC_RIG
from data_types.run_config import DataConfig
from logic.synthetic import make_rig, MOUTH_AMPLITUDE, rig_cameras, talking_truth

SMALL = DataConfig(n_views=3, n_frames=6, width=24, height=24, seed=5)


def test_rig_cameras_look_at_the_origin():
    for camera in rig_cameras(3, 32, 32):
        center_cam = camera.rotation @ np.zeros(3) + camera.translation
        assert center_cam[2] > 0.0
        assert_allclose(center_cam[:2], 0.0, atol=1e-9)


@pytest.mark.parametrize("rig", list(SYNTHETIC_RIG))
def test_rigs_are_deterministic(rig):
    a = make_rig(rig, SMALL)
    b = make_rig(rig, SMALL)
    assert len(a.frames) == len(b.frames)
    for fa, fb in zip(a.frames, b.frames):
        assert_array_equal(fa.image, fb.image)
        assert fa.image.shape == (24, 24, 3)
        assert np.all((fa.image >= 0.0) & (fa.image <= 1.0))


def test_static_rigs_supervise_the_whole_image():
    dataset = make_rig("blobs", SMALL)
    assert len(dataset.frames) == 3
    assert all(frame.face_mask.all() and frame.feature_index is None for frame in dataset.frames)
    assert dataset.features is None


def test_stripe_rig_has_an_eval_region():
    dataset = make_rig(SYNTHETIC_RIG.STRIPE, SMALL)
    assert dataset.truth.eval_mask.shape == (24, 24)
    assert dataset.truth.eval_mask.any()


def test_talking_rig_masks_partition_the_image():
    dataset = make_rig(SYNTHETIC_RIG.TALKING, SMALL)
    assert len(dataset.frames) == 6
    assert dataset.features.n_frames == 6
    for f, frame in enumerate(dataset.frames):
        assert frame.feature_index == f
        assert_array_equal(frame.face_mask + frame.mouth_mask, np.ones((24, 24)))
    assert dataset.driven_frames() == dataset.frames


def test_only_marked_mouth_gaussians_follow_the_audio():
    truth = talking_truth(0)
    moved = truth.mouth_positions(np.array([np.pi / 2, 0.0]))
    assert_allclose(moved[truth.marked] - truth.mouth.positions[truth.marked], np.tile(MOUTH_AMPLITUDE, (3, 1)))
    assert_array_equal(moved[~truth.marked], truth.mouth.positions[~truth.marked])


def test_unknown_rig_is_a_config_error():
    with pytest.raises(ConfigError):
        make_rig("teapot", SMALL)
