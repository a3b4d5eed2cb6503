"""
PLY scene files.

Clouds are stored as one binary little-endian "vertex" element with float32
properties in the common splatting interchange order:

    x y z nx ny nz f_dc_0..2 [f_rest_0..8] opacity scale_0..2 rot_0..3

Values are the raw (unactivated) parameters. f_rest is present for SH degree 1 and is
ordered channel-major (all bands of red, then green, then blue). The normals are
written as zeros and ignored on read.
"""

import io
import os

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

try:
    from ..global_state import state
    from ..errors import InputFileError
    from ..data_types.cloud import GaussianCloud
    from .run_logs import atomic_write_bytes
except ImportError:
    from global_state import state
    from errors import InputFileError
    from data_types.cloud import GaussianCloud
    from services.run_logs import atomic_write_bytes

ELEMENT = "vertex"


def ply_attributes(sh_degree: int) -> list[str]:
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    if sh_degree == 1:
        names += [f"f_rest_{i}" for i in range(9)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def cloud_to_ply_bytes(cloud: GaussianCloud) -> bytes:
    n = cloud.n
    columns = [
        cloud.positions,
        np.zeros((n, 3)),
        cloud.colors[:, :, 0],
    ]
    if cloud.sh_degree == 1:
        columns.append(cloud.colors[:, :, 1:].reshape(n, 9))
    columns += [cloud.raw_opacities[:, None], cloud.raw_scales, cloud.raw_rotations]
    values = np.concatenate(columns, axis=1).astype(np.float32)

    names = ply_attributes(cloud.sh_degree)
    elements = np.empty(n, dtype=[(name, "<f4") for name in names])
    for i, name in enumerate(names):
        elements[name] = values[:, i]
    buffer = io.BytesIO()
    PlyData([PlyElement.describe(elements, ELEMENT)], text=False, byte_order="<").write(buffer)
    return buffer.getvalue()


def write_ply(cloud: GaussianCloud, path: str):
    """
    Write a cloud as a binary little-endian PLY file (atomically).

    Args:
        cloud (GaussianCloud): Cloud to store
        path (str): Destination file
    """
    atomic_write_bytes(path, cloud_to_ply_bytes(cloud))
    state.logger.debug(f"Wrote {cloud.n} Gaussians to {path}")


def _header_length(raw: bytes, path: str) -> int:
    end = raw.find(b"end_header")
    if end < 0:
        raise InputFileError(path, "PLY header has no end_header line", offset=0)
    newline = raw.find(b"\n", end)
    if newline < 0:
        raise InputFileError(path, "PLY header is not terminated", offset=end)
    return newline + 1


def _parse_error_offset(error: PlyParseError, header_length: int):
    row = getattr(error, "row", None)
    element = getattr(error, "element", None)
    if row is None or element is None:
        return None
    try:
        return header_length + int(row) * element.dtype("<").itemsize
    except (AttributeError, TypeError):
        return None


def read_ply(path: str) -> GaussianCloud:
    """
    Read a cloud written by write_ply (or any file with the same properties).

    Args:
        path (str): PLY file

    Returns:
        GaussianCloud: Cloud with float64 arrays

    Raises:
        InputFileError: If the file is missing, malformed, truncated or lacks a
            required property; the message names the file and, when known, the offset
    """
    if not os.path.isfile(path):
        raise InputFileError(path, "file not found")
    with open(path, "rb") as f:
        raw = f.read()
    header_length = _header_length(raw, path)
    try:
        ply = PlyData.read(io.BytesIO(raw))
    except PlyParseError as e:
        offset = _parse_error_offset(e, header_length)
        state.logger.error(f"Corrupt PLY {path}: {e}")
        raise InputFileError(path, f"malformed PLY: {e}", offset=offset)

    if ELEMENT not in ply:
        raise InputFileError(path, f"PLY has no '{ELEMENT}' element", offset=0)
    vertex = ply[ELEMENT]
    names = {p.name for p in vertex.properties}
    sh_degree = 1 if "f_rest_0" in names else 0
    required = [n for n in ply_attributes(sh_degree) if not n.startswith("n")]
    missing = [n for n in required if n not in names]
    if missing:
        raise InputFileError(path, f"PLY vertex element is missing properties {missing}", offset=0)

    expected = header_length + vertex.count * vertex.dtype("<").itemsize
    if not ply.text and len(raw) != expected:
        raise InputFileError(
            path, f"PLY body holds {len(raw) - header_length} bytes, header implies {expected - header_length}",
            offset=min(len(raw), expected),
        )

    n = vertex.count
    column = lambda name: np.asarray(vertex[name], dtype=np.float64)
    colors = np.zeros((n, 3, 4 if sh_degree else 1))
    for c in range(3):
        colors[:, c, 0] = column(f"f_dc_{c}")
    if sh_degree:
        rest = np.stack([column(f"f_rest_{i}") for i in range(9)], axis=1)
        colors[:, :, 1:] = rest.reshape(n, 3, 3)
    return GaussianCloud(
        positions=np.stack([column("x"), column("y"), column("z")], axis=1),
        raw_scales=np.stack([column(f"scale_{i}") for i in range(3)], axis=1),
        raw_rotations=np.stack([column(f"rot_{i}") for i in range(4)], axis=1),
        raw_opacities=column("opacity"),
        colors=colors,
    )
