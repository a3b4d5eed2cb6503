import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from errors import ContractViolation
from logic.metrics import masked_psnr, positional_error, psnr, PSNR_CAP, ssim


def test_identical_images_hit_the_psnr_cap():
    image = np.random.default_rng(0).uniform(size=(8, 8, 3))
    assert psnr(image, image) == PSNR_CAP
    assert ssim(image, image) == pytest.approx(1.0)


def test_psnr_of_a_constant_offset():
    a = np.full((4, 4, 3), 0.5)
    assert psnr(a, a + 0.1) == pytest.approx(20.0)


def test_masked_psnr_ignores_unselected_pixels():
    a = np.zeros((4, 4, 3))
    b = a.copy()
    b[0, 0] = 1.0
    mask = np.ones((4, 4))
    mask[0, 0] = 0.0
    assert masked_psnr(a, b, mask) == PSNR_CAP
    with pytest.raises(ContractViolation):
        masked_psnr(a, b, np.zeros((4, 4)))


def test_shape_mismatch_raises():
    with pytest.raises(ContractViolation):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_positional_error():
    pred = np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]])
    assert positional_error(pred, np.zeros((2, 3))) == pytest.approx(2.5)
    assert positional_error(pred, np.zeros((2, 3)), np.array([False, True])) == pytest.approx(5.0)


images = arrays(np.float64, (12, 12, 3), elements=st.floats(min_value=0.0, max_value=1.0))


@settings(max_examples=30, deadline=None)
@given(images, images)
def test_ssim_is_symmetric_and_bounded(a, b):
    forward = ssim(a, b)
    assert forward == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 - 1e-9 <= forward <= 1.0 + 1e-9
