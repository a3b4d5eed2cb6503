"""
Training losses with analytic image gradients.

    loss_l1_dssim   L1 + lambda * D-SSIM, optionally restricted to a mask
    loss_finetune   L1 + lambda * D-SSIM + gamma * perceptual hook

D-SSIM is (1 - SSIM) / 2. Under a mask both images are multiplied by the mask and
the L1 and SSIM maps are averaged over the masked pixels only.

Perceptual hooks are plain callables fn(pred, target) -> (value, gradient) kept in a
registry; "off" is always registered and contributes nothing.
"""

from typing import Callable, Optional

import numpy as np

from global_state import state
from errors import ConfigError, ContractViolation
from logic import metrics

PerceptualHook = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]

HOOK_OFF = "off"
PERCEPTUAL_HOOKS: dict[str, Optional[PerceptualHook]] = {HOOK_OFF: None}


def register_perceptual_hook(name: str, fn: PerceptualHook):
    """
    Register a perceptual loss under a name usable in LossConfig.hook.

    Raises:
        ConfigError: If the name is "off"
    """
    if name == HOOK_OFF:
        raise ConfigError("The hook id 'off' is reserved")
    PERCEPTUAL_HOOKS[name] = fn
    state.logger.debug(f"Registered perceptual hook '{name}'")


def unregister_perceptual_hook(name: str):
    if name != HOOK_OFF:
        PERCEPTUAL_HOOKS.pop(name, None)


def get_perceptual_hook(name: str) -> Optional[PerceptualHook]:
    """
    Raises:
        ConfigError: If no hook is registered under the name
    """
    if name not in PERCEPTUAL_HOOKS:
        state.logger.error(f"Unknown perceptual hook '{name}'. Registered: {sorted(PERCEPTUAL_HOOKS)}")
        raise ConfigError(f"Unknown perceptual hook '{name}'. Registered: {sorted(PERCEPTUAL_HOOKS)}")
    return PERCEPTUAL_HOOKS[name]


def mean_abs_hook(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute difference, a stand-in perceptual term."""
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _check_mask(mask: np.ndarray, shape: tuple) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != shape[:2]:
        raise ContractViolation(f"Mask has shape {mask.shape}, expected {shape[:2]}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ContractViolation("Mask values must be 0 or 1")
    if not mask.any():
        state.logger.error("Loss mask selects no pixel")
        raise ContractViolation("Loss mask selects no pixel")
    return mask


def loss_l1_dssim(pred: np.ndarray, target: np.ndarray, mask: np.ndarray = None,
                  lam: float = 0.2) -> tuple[float, np.ndarray]:
    """
    Masked L1 + lambda * D-SSIM.

    Args:
        pred (np.ndarray): (H, W, 3) rendered image
        target (np.ndarray): (H, W, 3) target image
        mask (np.ndarray, optional): (H, W) {0, 1} supervision region; whole image if None
        lam (float): D-SSIM weight

    Returns:
        tuple: loss value and dL/d pred (H, W, 3)

    Raises:
        ContractViolation: On shape mismatch, non-binary mask or empty mask
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractViolation(f"Prediction {pred.shape} and target {target.shape} differ in shape")
    if mask is None:
        m = np.ones(pred.shape[:2])
    else:
        m = _check_mask(mask, pred.shape)
    m3 = np.broadcast_to(m[:, :, None], pred.shape)
    count = float(m3.sum())

    x = pred * m3
    y = target * m3
    diff = x - y
    l1 = float(np.sum(np.abs(diff))) / count
    grad = np.sign(diff) * m3 / count

    if lam > 0.0:
        terms = metrics.ssim_terms(x, y)
        ssim_val = float(np.sum(terms.s_map * m3)) / count
        loss = l1 + lam * (1.0 - ssim_val) / 2.0
        weights = -(lam / 2.0) * m3 / count
        grad = grad + metrics.ssim_backward(x, y, terms, weights) * m3
    else:
        loss = l1
    return loss, grad


def loss_finetune(pred: np.ndarray, target: np.ndarray, lam: float = 0.2, gamma: float = 0.05,
                  hook: str = HOOK_OFF) -> tuple[float, np.ndarray]:
    """
    Full-frame fine-tuning loss, L1 + lambda * D-SSIM + gamma * hook(pred, target).

    Raises:
        ConfigError: If the hook id is not registered
    """
    fn = get_perceptual_hook(hook)
    loss, grad = loss_l1_dssim(pred, target, None, lam)
    if fn is not None and gamma > 0.0:
        value, hook_grad = fn(pred, target)
        loss += gamma * float(value)
        grad = grad + gamma * hook_grad
    return loss, grad
