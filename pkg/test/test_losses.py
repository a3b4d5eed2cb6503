import numpy as np
import pytest

from errors import ConfigError, ContractViolation
from logic.losses import (
    loss_finetune, loss_l1_dssim, mean_abs_hook, register_perceptual_hook, unregister_perceptual_hook,
)


@pytest.fixture
def pair():
    rng = np.random.default_rng(4)
    return rng.uniform(0.2, 0.8, size=(10, 12, 3)), rng.uniform(0.2, 0.8, size=(10, 12, 3))


def numeric_grad(fn, pred, index, h=1e-6):
    plus, minus = pred.copy(), pred.copy()
    plus[index] += h
    minus[index] -= h
    return (fn(plus) - fn(minus)) / (2 * h)


def test_identical_images_have_zero_loss(pair):
    pred, _ = pair
    loss, _ = loss_l1_dssim(pred, pred)
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_pure_l1(pair):
    pred, target = pair
    loss, grad = loss_l1_dssim(pred, target, lam=0.0)
    assert loss == pytest.approx(np.mean(np.abs(pred - target)))
    np.testing.assert_allclose(grad, np.sign(pred - target) / pred.size)


@pytest.mark.parametrize("masked", [False, True])
def test_gradient_matches_finite_differences(pair, masked):
    pred, target = pair
    mask = None
    if masked:
        mask = np.zeros(pred.shape[:2])
        mask[2:8, 3:9] = 1.0
    _, grad = loss_l1_dssim(pred, target, mask, lam=0.2)
    for index in [(4, 5, 0), (2, 3, 2), (7, 8, 1), (0, 0, 1)]:
        numeric = numeric_grad(lambda p: loss_l1_dssim(p, target, mask, lam=0.2)[0], pred, index)
        assert grad[index] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


def test_mask_outside_pixels_get_no_gradient(pair):
    pred, target = pair
    mask = np.zeros(pred.shape[:2])
    mask[:5] = 1.0
    _, grad = loss_l1_dssim(pred, target, mask)
    assert not np.any(grad[5:])


def test_bad_masks_are_rejected(pair):
    pred, target = pair
    with pytest.raises(ContractViolation):
        loss_l1_dssim(pred, target, np.zeros(pred.shape[:2]))
    with pytest.raises(ContractViolation):
        loss_l1_dssim(pred, target, np.full(pred.shape[:2], 0.5))
    with pytest.raises(ContractViolation):
        loss_l1_dssim(pred, target[:5])


def test_finetune_without_hook_matches_base_loss(pair):
    pred, target = pair
    assert loss_finetune(pred, target, 0.2, 0.5)[0] == pytest.approx(loss_l1_dssim(pred, target, lam=0.2)[0])


def test_finetune_adds_the_registered_hook(pair):
    pred, target = pair
    register_perceptual_hook("mean-abs", mean_abs_hook)
    try:
        loss, grad = loss_finetune(pred, target, 0.2, 0.5, hook="mean-abs")
        base, base_grad = loss_l1_dssim(pred, target, lam=0.2)
        assert loss == pytest.approx(base + 0.5 * np.mean(np.abs(pred - target)))
        np.testing.assert_allclose(grad - base_grad, 0.5 * np.sign(pred - target) / pred.size)
    finally:
        unregister_perceptual_hook("mean-abs")


def test_unknown_and_reserved_hooks(pair):
    pred, target = pair
    with pytest.raises(ConfigError):
        loss_finetune(pred, target, hook="lpips")
    with pytest.raises(ConfigError):
        register_perceptual_hook("off", mean_abs_hook)
