import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from errors import InputFileError
from services.image_io import (
    decode_srgb, encode_srgb, plot_points, png_bytes, read_mask, read_png, write_mask, write_png,
)


def test_gamma_encoding_endpoints():
    assert_array_equal(encode_srgb(np.array([0.0, 1.0, -3.0, 7.0])), [0, 255, 0, 255])
    assert encode_srgb(np.array([0.5]))[0] == round(255 * 0.5 ** (1 / 2.2))


def test_png_round_trip_is_within_one_step(tmp_path):
    image = np.random.default_rng(0).uniform(size=(6, 5, 3))
    path = str(tmp_path / "image.png")
    write_png(image, path)
    loaded = read_png(path)
    assert loaded.shape == (6, 5, 3)
    assert_array_equal(encode_srgb(loaded), encode_srgb(image))


def test_identical_images_give_identical_bytes():
    image = np.random.default_rng(1).uniform(size=(4, 4, 3))
    assert png_bytes(image) == png_bytes(image.copy())


def test_masks_are_binary(tmp_path):
    mask = np.zeros((4, 4))
    mask[1:3, 1:3] = 1.0
    path = str(tmp_path / "mask.png")
    write_mask(mask, path)
    assert_array_equal(read_mask(path), mask)


def test_undecodable_file(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not a png")
    with pytest.raises(InputFileError, match="cannot decode"):
        read_png(str(path))


def test_plot_points_skips_offscreen(tmp_path):
    path = tmp_path / "points.png"
    plot_points(np.array([[1.0, 1.0], [50.0, 2.0]]), 8, 8, str(path), scale=4)
    canvas = np.asarray(Image.open(path).convert("L"))
    assert canvas.shape == (32, 32)
    assert canvas[6, 6] == 255
    assert canvas.sum() == canvas[4:9, 4:9].sum()


def test_decode_is_the_inverse_on_the_grid():
    values = np.arange(256)
    assert_array_equal(encode_srgb(decode_srgb(values)), values)
