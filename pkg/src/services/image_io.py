"""
PNG image I/O.

Images live in linear RGB in memory and are stored as 8-bit PNGs encoded with a fixed
gamma of 2.2 (v = round(255 * x^(1/2.2))), so identical renders always produce
identical bytes. Masks are single-channel PNGs thresholded at 128.
"""

import io
import os

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

try:
    from ..global_state import state
    from ..errors import InputFileError
    from .run_logs import atomic_write_bytes
except ImportError:
    from global_state import state
    from errors import InputFileError
    from services.run_logs import atomic_write_bytes

GAMMA = 2.2


def encode_srgb(image: np.ndarray) -> np.ndarray:
    """Linear [0, 1] floats to gamma-encoded uint8."""
    clipped = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(255.0 * clipped ** (1.0 / GAMMA)).astype(np.uint8)


def decode_srgb(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) / 255.0) ** GAMMA


def _png_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(array)).save(buffer, format="PNG")
    return buffer.getvalue()


def png_bytes(image: np.ndarray) -> bytes:
    return _png_bytes(encode_srgb(image))


def write_png(image: np.ndarray, path: str):
    """
    Write a linear RGB image as an 8-bit gamma-encoded PNG (atomically).

    Args:
        image (np.ndarray): (H, W, 3) linear RGB
        path (str): Destination file
    """
    atomic_write_bytes(path, png_bytes(image))
    state.logger.debug(f"Wrote image {image.shape[1]}x{image.shape[0]} to {path}")


def _open(path: str) -> Image.Image:
    if not os.path.isfile(path):
        raise InputFileError(path, "file not found")
    try:
        with open(path, "rb") as f:
            image = Image.open(io.BytesIO(f.read()))
            image.load()
        return image
    except (UnidentifiedImageError, OSError) as e:
        state.logger.error(f"Cannot decode image {path}: {e}")
        raise InputFileError(path, f"cannot decode image: {e}")


def read_png(path: str) -> np.ndarray:
    """
    Read an 8-bit PNG into linear RGB.

    Raises:
        InputFileError: If the file is missing or not a decodable image
    """
    return decode_srgb(np.asarray(_open(path).convert("RGB")))


def write_mask(mask: np.ndarray, path: str):
    values = np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(values))


def read_mask(path: str) -> np.ndarray:
    """(H, W) float mask with values in {0, 1}."""
    values = np.asarray(_open(path).convert("L"))
    return (values >= 128).astype(np.float64)


def plot_points(points: np.ndarray, width: int, height: int, path: str, scale: int = 4,
                color=(255, 255, 255), background=(0, 0, 0)):
    """
    Scatter plot of 2-D pixel coordinates, upscaled by `scale`.

    Args:
        points (np.ndarray): (N, 2) pixel coordinates; points outside the image are skipped
        width, height (int): Image size the coordinates refer to
        path (str): Destination PNG
    """
    canvas = Image.new("RGB", (width * scale, height * scale), background)
    draw = ImageDraw.Draw(canvas)
    for x, y in np.asarray(points, dtype=np.float64):
        if not (-0.5 <= x < width - 0.5 and -0.5 <= y < height - 0.5):
            continue
        cx, cy = (x + 0.5) * scale, (y + 0.5) * scale
        draw.ellipse([cx - 1, cy - 1, cx + 1, cy + 1], fill=color)
    buffer = io.BytesIO()
    canvas.save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())
