import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import ContractViolation
from data_types.run_config import EncoderConfig
from logic.hash_encoder import encode_position, level_resolutions, TriPlaneHashEncoder

SMALL = EncoderConfig(levels=3, features=2, log2_table_size=6, base_resolution=4, max_resolution=16, init_range=0.5)


def make_encoder(cfg: EncoderConfig = SMALL, seed: int = 0) -> TriPlaneHashEncoder:
    return TriPlaneHashEncoder(cfg, [-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], seed=seed)


def test_output_width():
    encoder = make_encoder(EncoderConfig(levels=4, features=2))
    assert encoder.output_dim == 24
    assert encode_position(encoder, [0.1, 0.2, 0.3]).shape == (24,)


def test_encoding_is_deterministic():
    encoder = make_encoder()
    assert_array_equal(encode_position(encoder, [0.3, -0.4, 0.2]), encode_position(encoder, [0.3, -0.4, 0.2]))


def test_resolutions_grow_geometrically():
    assert level_resolutions(EncoderConfig(levels=4, base_resolution=16, max_resolution=256)).tolist() == [16, 40, 101, 256]


def test_positions_outside_the_box_are_clamped():
    encoder = make_encoder()
    assert_allclose(encode_position(encoder, [5.0, 5.0, 5.0]), encode_position(encoder, [1.0, 1.0, 1.0]))


def test_encoding_is_continuous():
    encoder = make_encoder()
    a = encode_position(encoder, [0.123, 0.456, -0.321])
    b = encode_position(encoder, [0.123 + 1e-9, 0.456, -0.321])
    assert np.max(np.abs(a - b)) < 1e-6


def test_empty_box_is_rejected():
    with pytest.raises(ContractViolation):
        TriPlaneHashEncoder(SMALL, [0, 0, 0], [1, 0, 1])


def test_fine_levels_are_hashed_into_the_table():
    encoder = make_encoder(EncoderConfig(levels=2, features=1, log2_table_size=4, base_resolution=2, max_resolution=64))
    _, cache = encoder.encode(np.random.default_rng(0).uniform(-1, 1, size=(50, 3)))
    assert cache.indices.min() >= 0
    assert cache.indices.max() < encoder.table_size


def test_gradients_match_finite_differences():
    encoder = make_encoder()
    rng = np.random.default_rng(1)
    positions = rng.uniform(-0.9, 0.9, size=(12, 3))
    weights = rng.normal(size=(12, encoder.output_dim))
    features, cache = encoder.encode(positions)
    d_tables, d_positions = encoder.backward(cache, weights)

    # only points that sit well inside their cells on every level
    margin = np.min(np.minimum(cache.frac, 1.0 - cache.frac), axis=(0, 1, 3))
    interior = np.flatnonzero(margin > 1e-3)
    assert interior.size > 0
    h = 1e-6
    for i in interior:
        for j in range(3):
            plus, minus = positions.copy(), positions.copy()
            plus[i, j] += h
            minus[i, j] -= h
            numeric = (np.sum(encoder.encode(plus)[0] * weights) - np.sum(encoder.encode(minus)[0] * weights)) / (2 * h)
            assert d_positions[i, j] == pytest.approx(numeric, rel=1e-3, abs=1e-6)

    # the encoding is linear in the tables
    for index in [(0, 0, 3, 1), (1, 2, 17, 0), (2, 1, 40, 1)]:
        encoder.tables[index] += h
        up = np.sum(encoder.encode(positions)[0] * weights)
        encoder.tables[index] -= 2 * h
        down = np.sum(encoder.encode(positions)[0] * weights)
        encoder.tables[index] += h
        assert d_tables[index] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)


def test_backward_rejects_wrong_gradient_shape():
    encoder = make_encoder()
    _, cache = encoder.encode(np.zeros((2, 3)))
    with pytest.raises(ContractViolation):
        encoder.backward(cache, np.zeros((3, encoder.output_dim)))
