"""
Image quality metrics.

SSIM uses an 11x11 Gaussian window (sigma 1.5) applied separably with zero padding,
K1 = 0.01 and K2 = 0.03 on a unit dynamic range, averaged over pixels and channels.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from errors import ContractViolation

PSNR_CAP = 100.0
MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
C1 = SSIM_K1 ** 2
C2 = SSIM_K2 ** 2


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    k = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(k ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


_WINDOW = gaussian_window()


def blur(image: np.ndarray) -> np.ndarray:
    """
    Separable Gaussian filter over the two spatial axes with zero padding.

    The window is symmetric, so this operator is its own adjoint.
    """
    out = correlate1d(image, _WINDOW, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _WINDOW, axis=1, mode="constant", cval=0.0)


@dataclass
class SsimTerms:
    """Local statistics of an SSIM evaluation, reused by the loss gradient."""
    s_map: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ContractViolation(f"Images differ in shape: {a.shape} vs {b.shape}")


def ssim_terms(x: np.ndarray, y: np.ndarray) -> SsimTerms:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    mu_x = blur(x)
    mu_y = blur(y)
    sxx = blur(x * x) - mu_x * mu_x
    syy = blur(y * y) - mu_y * mu_y
    sxy = blur(x * y) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * sxy + C2
    b1 = mu_x * mu_x + mu_y * mu_y + C1
    b2 = sxx + syy + C2
    return SsimTerms(s_map=(a1 * a2) / (b1 * b2), mu_x=mu_x, mu_y=mu_y, a1=a1, a2=a2, b1=b1, b2=b2)


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ssim_terms(a, b).s_map


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """
    Mean structural similarity of two images.

    Args:
        a, b (np.ndarray): (H, W) or (H, W, C) images in [0, 1]

    Returns:
        float: Mean local SSIM; 1.0 for identical images
    """
    return float(np.mean(ssim_map(a, b)))


def ssim_backward(x: np.ndarray, y: np.ndarray, terms: SsimTerms, weights: np.ndarray) -> np.ndarray:
    """
    Gradient of sum(weights * s_map) with respect to x.

    Args:
        x, y (np.ndarray): Images passed to ssim_terms
        terms (SsimTerms): Their local statistics
        weights (np.ndarray): Per-entry weights of the SSIM map

    Returns:
        np.ndarray: Gradient w.r.t. x, same shape
    """
    s = terms.s_map
    d_mu_x = (2.0 * terms.mu_y * (terms.a2 - terms.a1) / (terms.b1 * terms.b2)
              - 2.0 * terms.mu_x * s * (1.0 / terms.b1 - 1.0 / terms.b2))
    d_xx = -s / terms.b2
    d_xy = 2.0 * s / terms.a2
    return blur(weights * d_mu_x) + 2.0 * x * blur(weights * d_xx) + y * blur(weights * d_xy)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """
    Peak signal-to-noise ratio on a unit dynamic range, capped at 100 dB.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def masked_psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """
    PSNR over the pixels where mask > 0.

    Raises:
        ContractViolation: If the mask selects no pixel
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    select = np.asarray(mask) > 0
    if not select.any():
        raise ContractViolation("masked_psnr: mask selects no pixel")
    mse = float(np.mean((a[select] - b[select]) ** 2))
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def positional_error(pred_positions: np.ndarray, true_positions: np.ndarray, marked: np.ndarray = None) -> float:
    """
    Mean Euclidean distance between predicted and true positions of the marked rows.

    Args:
        pred_positions (np.ndarray): (N, 3)
        true_positions (np.ndarray): (N, 3)
        marked (np.ndarray, optional): (N,) bool rows to evaluate; all rows by default
    """
    pred_positions = np.asarray(pred_positions, dtype=np.float64)
    true_positions = np.asarray(true_positions, dtype=np.float64)
    _check_pair(pred_positions, true_positions)
    if marked is None:
        marked = np.ones(pred_positions.shape[0], dtype=bool)
    if not np.any(marked):
        raise ContractViolation("positional_error: no marked rows")
    return float(np.mean(np.linalg.norm(pred_positions[marked] - true_positions[marked], axis=1)))
