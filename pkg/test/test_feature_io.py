import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import InputFileError
from logic.synthetic import talking_features
from services.feature_io import decode_features, encode_features, HEADER_SIZE, read_features, write_features


def test_features_survive_a_round_trip(tmp_path):
    features = talking_features(5, seed=1)
    path = str(tmp_path / "features.pgsf")
    write_features(features, path)
    loaded = read_features(path)
    assert (loaded.n_frames, loaded.dim_audio, loaded.dim_expression) == (5, 2, 2)
    assert_allclose(loaded.audio, features.audio, rtol=1e-6, atol=1e-7)
    assert_allclose(loaded.expression, features.expression, rtol=1e-6, atol=1e-7)


def test_file_length_follows_the_header():
    raw = encode_features(talking_features(4))
    assert len(raw) == HEADER_SIZE + 4 * 4 * 4


def test_bad_magic():
    raw = bytearray(encode_features(talking_features(2)))
    raw[:4] = b"NOPE"
    with pytest.raises(InputFileError) as info:
        decode_features(bytes(raw))
    assert info.value.offset == 0


def test_unsupported_version():
    raw = bytearray(encode_features(talking_features(2)))
    raw[4:8] = np.array([9], dtype="<u4").tobytes()
    with pytest.raises(InputFileError, match="version"):
        decode_features(bytes(raw))


@pytest.mark.parametrize("cut", [1, 4, 17])
def test_length_mismatch_reports_the_offset(cut):
    raw = encode_features(talking_features(3))
    with pytest.raises(InputFileError) as info:
        decode_features(raw[:-cut])
    assert info.value.offset == len(raw) - cut
