"""
PGSF feature sequence files.

Layout (little-endian):

    "PGSF" | u32 version | u32 frame_count | u32 dim_audio | u32 dim_expr
    frame_count x (dim_audio + dim_expr) f32, audio first in every row

The file length must match the header arithmetic exactly.
"""

import os

import numpy as np

try:
    from ..global_state import state
    from ..errors import InputFileError
    from ..data_types.features import FeatureSequence
    from .run_logs import atomic_write_bytes
except ImportError:
    from global_state import state
    from errors import InputFileError
    from data_types.features import FeatureSequence
    from services.run_logs import atomic_write_bytes

MAGIC = b"PGSF"
VERSION = 1
HEADER_SIZE = 4 + 4 * 4


def encode_features(features: FeatureSequence) -> bytes:
    header = MAGIC + np.array(
        [VERSION, features.n_frames, features.dim_audio, features.dim_expression], dtype="<u4"
    ).tobytes()
    body = np.concatenate([features.audio, features.expression], axis=1).astype("<f4").tobytes()
    return header + body


def decode_features(raw: bytes, path: str = "<bytes>") -> FeatureSequence:
    """
    Raises:
        InputFileError: On a bad magic, unsupported version or a length mismatch
    """
    if len(raw) < HEADER_SIZE:
        raise InputFileError(path, f"file holds {len(raw)} bytes, shorter than the {HEADER_SIZE}-byte header",
                             offset=len(raw))
    if raw[:4] != MAGIC:
        raise InputFileError(path, f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    version, frames, dim_audio, dim_expr = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=4, offset=4))
    if version != VERSION:
        raise InputFileError(path, f"unsupported PGSF version {version}", offset=4)
    expected = HEADER_SIZE + frames * (dim_audio + dim_expr) * 4
    if len(raw) != expected:
        raise InputFileError(path, f"file holds {len(raw)} bytes, header implies {expected}",
                             offset=min(len(raw), expected))
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).astype(np.float64)
    data = data.reshape(frames, dim_audio + dim_expr)
    try:
        return FeatureSequence(audio=data[:, :dim_audio], expression=data[:, dim_audio:])
    except ValueError as e:
        raise InputFileError(path, str(e), offset=HEADER_SIZE)


def write_features(features: FeatureSequence, path: str):
    atomic_write_bytes(path, encode_features(features))
    state.logger.debug(f"Wrote {features.n_frames} feature frames to {path}")


def read_features(path: str) -> FeatureSequence:
    """
    Read a PGSF file.

    Args:
        path (str): Feature file

    Returns:
        FeatureSequence: Audio (F, D_a) and expression (F, D_e) rows as float64

    Raises:
        InputFileError: If the file is missing or malformed
    """
    if not os.path.isfile(path):
        raise InputFileError(path, "file not found")
    with open(path, "rb") as f:
        raw = f.read()
    try:
        return decode_features(raw, path)
    except InputFileError as e:
        state.logger.error(str(e))
        raise
