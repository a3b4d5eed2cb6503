"""
PGSW parameter checkpoints.

Layout (little-endian):

    "PGSW" | u32 version
    repeated until end of file:
        u16 name_length | name bytes (utf-8) | u8 rank | u32 dim x rank | f32 data

A scene is stored as named tensors: "<branch>.<param>" for the cloud arrays,
"<branch>.encoder.*" and "<branch>.mgf.*" for the deformer, and "scene.extent".
A checkpoint directory holds model.pgsw plus PLY snapshots of each branch cloud.
"""

import os

import numpy as np

try:
    from ..global_state import state
    from ..errors import InputFileError
    from ..data_types.cloud import GaussianCloud, PARAM_NAMES
    from ..data_types.dataset import BranchModel, SceneModel
    from ..data_types.enums import BRANCH, FUSION
    from ..data_types.run_config import EncoderConfig, MgfConfig
    from .run_logs import atomic_write_bytes
    from .ply_io import write_ply
    from ..logic.deform import BranchDeformer
    from ..logic.hash_encoder import TriPlaneHashEncoder
    from ..logic.mgf import MgfParams
except ImportError:
    from global_state import state
    from errors import InputFileError
    from data_types.cloud import GaussianCloud, PARAM_NAMES
    from data_types.dataset import BranchModel, SceneModel
    from data_types.enums import BRANCH, FUSION
    from data_types.run_config import EncoderConfig, MgfConfig
    from services.run_logs import atomic_write_bytes
    from services.ply_io import write_ply
    from logic.deform import BranchDeformer
    from logic.hash_encoder import TriPlaneHashEncoder
    from logic.mgf import MgfParams

MAGIC = b"PGSW"
VERSION = 1
MODEL_FILE = "model.pgsw"


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, np.array([VERSION], dtype="<u4").tobytes()]
    for name, value in tensors.items():
        value = np.asarray(value)
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype="<u2").tobytes())
        chunks.append(encoded)
        chunks.append(np.array([value.ndim], dtype="u1").tobytes())
        chunks.append(np.array(value.shape, dtype="<u4").tobytes())
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_tensors(raw: bytes, path: str = "<bytes>") -> dict[str, np.ndarray]:
    """
    Raises:
        InputFileError: On a bad magic, unsupported version or truncated record,
            with the offset of the record that failed
    """
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise InputFileError(path, f"bad magic, expected {MAGIC!r}", offset=0)
    version = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    if version != VERSION:
        raise InputFileError(path, f"unsupported PGSW version {version}", offset=4)

    tensors = {}
    pos = 8
    while pos < len(raw):
        start = pos
        try:
            name_length = int(np.frombuffer(raw, dtype="<u2", count=1, offset=pos)[0])
            pos += 2
            if pos + name_length + 1 > len(raw):
                raise ValueError("truncated tensor name")
            name = raw[pos:pos + name_length].decode("utf-8")
            pos += name_length
            rank = raw[pos]
            pos += 1
            shape = tuple(int(d) for d in np.frombuffer(raw, dtype="<u4", count=rank, offset=pos))
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            if pos + 4 * count > len(raw):
                raise ValueError(f"tensor '{name}' needs {4 * count} bytes, {len(raw) - pos} left")
            data = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
            pos += 4 * count
        except (ValueError, IndexError, UnicodeDecodeError) as e:
            state.logger.error(f"Corrupt checkpoint {path} at offset {start}: {e}")
            raise InputFileError(path, f"corrupt tensor record: {e}", offset=start)
        tensors[name] = data.reshape(shape)
    return tensors


def write_tensors(tensors: dict[str, np.ndarray], path: str):
    atomic_write_bytes(path, encode_tensors(tensors))


def read_tensors(path: str) -> dict[str, np.ndarray]:
    if not os.path.isfile(path):
        raise InputFileError(path, "file not found")
    with open(path, "rb") as f:
        return decode_tensors(f.read(), path)


def scene_to_tensors(scene: SceneModel) -> dict[str, np.ndarray]:
    tensors = {"scene.extent": np.array([scene.extent])}
    for model in scene.branches():
        prefix = model.branch.value
        for name, value in model.cloud.params().items():
            tensors[f"{prefix}.{name}"] = value
        deformer = model.deformer
        if deformer is None:
            continue
        enc = deformer.encoder
        c = enc.cfg
        tensors[f"{prefix}.encoder.config"] = np.array(
            [c.levels, c.features, c.log2_table_size, c.base_resolution, c.max_resolution, c.init_range]
        )
        tensors[f"{prefix}.encoder.bbox_min"] = enc.bbox_min
        tensors[f"{prefix}.encoder.bbox_max"] = enc.bbox_max
        tensors[f"{prefix}.encoder.tables"] = enc.tables
        net = deformer.network
        tensors[f"{prefix}.mgf.dims"] = np.array(net.dims)
        tensors[f"{prefix}.mgf.config"] = np.array([
            net.cfg.projected_dim, net.cfg.hidden_width, net.cfg.hidden_layers,
            1 if net.fusion == FUSION.GATED else 0,
        ])
        for name, value in net.params.items():
            tensors[f"{prefix}.mgf.{name}"] = value
    return tensors


def _deformer_from_tensors(branch: BRANCH, tensors: dict[str, np.ndarray], path: str):
    prefix = branch.value
    levels, features, log2_t, base, top, init_range = tensors[f"{prefix}.encoder.config"]
    enc_cfg = EncoderConfig(levels=int(levels), features=int(features), log2_table_size=int(log2_t),
                            base_resolution=int(base), max_resolution=int(top), init_range=float(init_range))
    encoder = TriPlaneHashEncoder(enc_cfg, tensors[f"{prefix}.encoder.bbox_min"], tensors[f"{prefix}.encoder.bbox_max"])
    encoder.tables = tensors[f"{prefix}.encoder.tables"].copy()

    projected, width, layers, gated = (int(v) for v in tensors[f"{prefix}.mgf.config"])
    fusion = FUSION.GATED if gated else FUSION.CONCAT
    mgf_cfg = MgfConfig(projected_dim=projected, hidden_width=width, hidden_layers=layers,
                        face_fusion=fusion, mouth_fusion=fusion)
    ds, da, de = (int(v) for v in tensors[f"{prefix}.mgf.dims"])
    network = MgfParams(branch, mgf_cfg, ds, da, de, fusion=fusion)
    for name in list(network.params):
        key = f"{prefix}.mgf.{name}"
        if key not in tensors or tensors[key].shape != network.params[name].shape:
            raise InputFileError(path, f"checkpoint tensor '{key}' is missing or has the wrong shape")
        network.params[name] = tensors[key].copy()
    return BranchDeformer(branch, encoder, network)


def scene_from_tensors(tensors: dict[str, np.ndarray], path: str = "<tensors>") -> SceneModel:
    """
    Raises:
        InputFileError: If the face branch or any required tensor is missing
    """
    branches = {}
    for branch in BRANCH:
        prefix = branch.value
        if f"{prefix}.positions" not in tensors:
            continue
        missing = [n for n in PARAM_NAMES if f"{prefix}.{n}" not in tensors]
        if missing:
            raise InputFileError(path, f"checkpoint lacks {prefix} tensors {missing}")
        try:
            cloud = GaussianCloud(**{n: tensors[f"{prefix}.{n}"].copy() for n in PARAM_NAMES})
        except ValueError as e:
            raise InputFileError(path, f"{prefix} cloud is inconsistent: {e}")
        deformer = None
        if f"{prefix}.encoder.tables" in tensors:
            deformer = _deformer_from_tensors(branch, tensors, path)
        branches[branch] = BranchModel(branch, cloud, deformer)
    if BRANCH.FACE not in branches:
        raise InputFileError(path, "checkpoint has no face branch")
    extent = float(tensors["scene.extent"][0]) if "scene.extent" in tensors else 1.0
    return SceneModel(face=branches[BRANCH.FACE], mouth=branches.get(BRANCH.MOUTH), extent=extent)


def save_checkpoint(scene: SceneModel, out_dir: str) -> str:
    """
    Write model.pgsw and one PLY snapshot per branch into out_dir.

    Returns:
        str: Path of the PGSW file
    """
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, MODEL_FILE)
    write_tensors(scene_to_tensors(scene), path)
    for model in scene.branches():
        write_ply(model.cloud, os.path.join(out_dir, f"{model.branch.value}.ply"))
    state.logger.info(f"Checkpoint written to {out_dir}")
    return path


def load_checkpoint(path: str) -> SceneModel:
    """
    Load a scene from a checkpoint directory or a PGSW file.

    Raises:
        InputFileError: If the file is missing or malformed
    """
    if os.path.isdir(path):
        path = os.path.join(path, MODEL_FILE)
    return scene_from_tensors(read_tensors(path), path)
