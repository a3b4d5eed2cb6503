"""
Targets directories.

Layout:

    cameras.json              list of camera objects (Camera.to_dict fields) with an
                              optional "feature_index" per frame
    frame_XXXX.png            target image of frame XXXX (8-bit, gamma 2.2)
    face_mask_XXXX.png        optional face-branch mask
    mouth_mask_XXXX.png       optional inside-mouth mask
    features.pgsf             optional driving features
    init_face.ply             optional initial clouds
    init_mouth.ply
    eval_mask.png             optional region for region metrics
    truth_face.ply            optional hidden ground truth of synthetic rigs
    truth_mouth.ply
    truth.json                optional marked rows and amplitude of the talking rig
"""

import json
import os
from typing import Optional

import numpy as np

try:
    from ..global_state import state
    from ..errors import InputFileError
    from ..data_types.camera import Camera
    from ..data_types.cloud import GaussianCloud
    from ..data_types.dataset import Dataset, Frame, SyntheticTruth
    from .run_logs import atomic_write_bytes
    from .image_io import read_png, read_mask, write_png, write_mask
    from .feature_io import read_features, write_features
    from .ply_io import read_ply, write_ply
except ImportError:
    from global_state import state
    from errors import InputFileError
    from data_types.camera import Camera
    from data_types.cloud import GaussianCloud
    from data_types.dataset import Dataset, Frame, SyntheticTruth
    from services.run_logs import atomic_write_bytes
    from services.image_io import read_png, read_mask, write_png, write_mask
    from services.feature_io import read_features, write_features
    from services.ply_io import read_ply, write_ply

CAMERAS_FILE = "cameras.json"
FEATURES_FILE = "features.pgsf"
EVAL_MASK_FILE = "eval_mask.png"
TRUTH_FILE = "truth.json"


def _maybe(path: str) -> Optional[str]:
    return path if os.path.isfile(path) else None


def load_initial_clouds(directory: str) -> dict[str, GaussianCloud]:
    """Initial clouds found in the directory, keyed by branch name."""
    clouds = {}
    for branch in ("face", "mouth"):
        path = _maybe(os.path.join(directory, f"init_{branch}.ply"))
        if path:
            clouds[branch] = read_ply(path)
    return clouds


def _load_truth(directory: str) -> Optional[SyntheticTruth]:
    face_path = _maybe(os.path.join(directory, "truth_face.ply"))
    eval_path = _maybe(os.path.join(directory, EVAL_MASK_FILE))
    if face_path is None and eval_path is None:
        return None
    face = read_ply(face_path) if face_path else None
    mouth_path = _maybe(os.path.join(directory, "truth_mouth.ply"))
    truth = SyntheticTruth(
        face=face,
        mouth=read_ply(mouth_path) if mouth_path else None,
        eval_mask=read_mask(eval_path) if eval_path else None,
    )
    truth_path = _maybe(os.path.join(directory, TRUTH_FILE))
    if truth_path:
        with open(truth_path, "r", encoding="utf-8") as f:
            extra = json.load(f)
        truth.marked = np.asarray(extra["marked"], dtype=bool)
        truth.amplitude = np.asarray(extra["amplitude"], dtype=np.float64)
    return truth


def load_targets(directory: str) -> Dataset:
    """
    Read a targets directory.

    Args:
        directory (str): Directory laid out as described in the module docstring

    Returns:
        Dataset: Frames (with masks and feature rows when present), features and truth

    Raises:
        InputFileError: If the directory, cameras.json or a frame image is missing or
            malformed
    """
    if not os.path.isdir(directory):
        raise InputFileError(directory, "targets directory not found")
    cameras_path = os.path.join(directory, CAMERAS_FILE)
    if not os.path.isfile(cameras_path):
        raise InputFileError(cameras_path, "file not found")
    try:
        with open(cameras_path, "r", encoding="utf-8") as f:
            entries = json.load(f)
    except json.JSONDecodeError as e:
        raise InputFileError(cameras_path, f"invalid JSON: {e.msg}", offset=e.pos)
    if not isinstance(entries, list) or not entries:
        raise InputFileError(cameras_path, "expected a non-empty list of cameras")

    features_path = _maybe(os.path.join(directory, FEATURES_FILE))
    features = read_features(features_path) if features_path else None

    frames = []
    for i, entry in enumerate(entries):
        try:
            camera = Camera.from_dict(entry)
        except (KeyError, TypeError, ValueError) as e:
            raise InputFileError(cameras_path, f"camera {i} is invalid: {e}")
        image = read_png(os.path.join(directory, f"frame_{i:04d}.png"))
        face_mask = _maybe(os.path.join(directory, f"face_mask_{i:04d}.png"))
        mouth_mask = _maybe(os.path.join(directory, f"mouth_mask_{i:04d}.png"))
        try:
            frames.append(Frame(
                camera=camera,
                image=image,
                face_mask=read_mask(face_mask) if face_mask else None,
                mouth_mask=read_mask(mouth_mask) if mouth_mask else None,
                feature_index=entry.get("feature_index"),
                name=f"frame_{i:04d}",
            ))
        except ValueError as e:
            raise InputFileError(os.path.join(directory, f"frame_{i:04d}.png"), str(e))
    try:
        dataset = Dataset(frames=frames, features=features, truth=_load_truth(directory))
    except ValueError as e:
        raise InputFileError(directory, str(e))
    state.logger.info(f"Loaded {len(frames)} frames from {directory}")
    return dataset


def write_targets(dataset: Dataset, directory: str):
    """Write a dataset (typically a synthetic rig) as a targets directory."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, frame in enumerate(dataset.frames):
        entry = frame.camera.to_dict()
        if frame.feature_index is not None:
            entry["feature_index"] = int(frame.feature_index)
        entries.append(entry)
        write_png(frame.image, os.path.join(directory, f"frame_{i:04d}.png"))
        if frame.face_mask is not None:
            write_mask(frame.face_mask, os.path.join(directory, f"face_mask_{i:04d}.png"))
        if frame.mouth_mask is not None:
            write_mask(frame.mouth_mask, os.path.join(directory, f"mouth_mask_{i:04d}.png"))
    atomic_write_bytes(os.path.join(directory, CAMERAS_FILE), json.dumps(entries, indent=2).encode("utf-8"))
    if dataset.features is not None:
        write_features(dataset.features, os.path.join(directory, FEATURES_FILE))

    truth = dataset.truth
    if truth is not None:
        if truth.face is not None:
            write_ply(truth.face, os.path.join(directory, "truth_face.ply"))
        if truth.mouth is not None:
            write_ply(truth.mouth, os.path.join(directory, "truth_mouth.ply"))
        if truth.eval_mask is not None:
            write_mask(truth.eval_mask, os.path.join(directory, EVAL_MASK_FILE))
        if truth.marked is not None:
            extra = {"marked": truth.marked.astype(bool).tolist(), "amplitude": truth.amplitude.tolist()}
            atomic_write_bytes(os.path.join(directory, TRUTH_FILE), json.dumps(extra, indent=2).encode("utf-8"))
    state.logger.info(f"Wrote {len(dataset.frames)} frames to {directory}")
