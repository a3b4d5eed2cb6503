"""
Training data and model containers.
"""

from dataclasses import dataclass, field
from typing import Optional, Any

import numpy as np

from errors import ContractViolation
from data_types.enums import BRANCH
from data_types.camera import Camera
from data_types.cloud import GaussianCloud
from data_types.features import FeatureSequence


@dataclass
class Frame:
    """
    One supervised image.

    Attributes:
        camera (Camera): View the image was taken from
        image (np.ndarray): (H, W, 3) linear RGB target
        face_mask (np.ndarray, optional): (H, W) {0, 1} face-branch supervision region
        mouth_mask (np.ndarray, optional): (H, W) {0, 1} inside-mouth supervision region
        feature_index (int, optional): Row of the feature sequence driving this frame;
            None for static frames
        name (str): Identifier used in logs and file names
    """
    camera: Camera
    image: np.ndarray
    face_mask: Optional[np.ndarray] = None
    mouth_mask: Optional[np.ndarray] = None
    feature_index: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        expected = (self.camera.height, self.camera.width, 3)
        if self.image.shape != expected:
            raise ContractViolation(f"Frame {self.name} image has shape {self.image.shape}, expected {expected}")
        for name in ("face_mask", "mouth_mask"):
            mask = getattr(self, name)
            if mask is not None:
                mask = np.asarray(mask, dtype=np.float64)
                if mask.shape != expected[:2]:
                    raise ContractViolation(f"Frame {self.name} {name} has shape {mask.shape}, expected {expected[:2]}")
                setattr(self, name, mask)

    def mask_for(self, branch: BRANCH) -> Optional[np.ndarray]:
        return self.face_mask if branch == BRANCH.FACE else self.mouth_mask


@dataclass
class SyntheticTruth:
    """
    Ground truth of a generated rig, kept for evaluation only.

    Attributes:
        face (GaussianCloud): Hidden face-branch cloud
        mouth (GaussianCloud, optional): Hidden mouth-branch cloud
        marked (np.ndarray, optional): (N_mouth,) bool, Gaussians moved by the audio
        amplitude (np.ndarray, optional): (3,) displacement A of marked Gaussians
        eval_mask (np.ndarray, optional): (H, W) region for region metrics (the stripe)
    """
    face: GaussianCloud
    mouth: Optional[GaussianCloud] = None
    marked: Optional[np.ndarray] = None
    amplitude: Optional[np.ndarray] = None
    eval_mask: Optional[np.ndarray] = None

    def mouth_positions(self, audio: np.ndarray) -> np.ndarray:
        """True mouth positions for a frame: marked rows move by A * sin(audio[0])."""
        positions = self.mouth.positions.copy()
        positions[self.marked] += self.amplitude * np.sin(audio[0])
        return positions


@dataclass
class Dataset:
    """
    Frames plus optional driving features.

    Attributes:
        frames (list[Frame]): Supervised images
        features (FeatureSequence, optional): Per-frame audio/expression features
        truth (SyntheticTruth, optional): Present for generated rigs
    """
    frames: list[Frame]
    features: Optional[FeatureSequence] = None
    truth: Optional[SyntheticTruth] = None

    def __post_init__(self):
        if not self.frames:
            raise ContractViolation("Dataset needs at least one frame")
        for frame in self.frames:
            if frame.feature_index is None:
                continue
            if self.features is None or not 0 <= frame.feature_index < self.features.n_frames:
                raise ContractViolation(f"Frame {frame.name} refers to missing feature row {frame.feature_index}")

    @property
    def cameras(self) -> list[Camera]:
        return [frame.camera for frame in self.frames]

    def static_frames(self) -> list[Frame]:
        """Frames without driving features; every frame when none is static."""
        static = [frame for frame in self.frames if frame.feature_index is None]
        return static or list(self.frames)

    def driven_frames(self) -> list[Frame]:
        return [frame for frame in self.frames if frame.feature_index is not None]

    def features_for(self, frame: Frame):
        if frame.feature_index is None or self.features is None:
            return None
        return self.features.frame(frame.feature_index)


@dataclass
class BranchModel:
    """
    One independently modeled cloud.

    Attributes:
        branch (BRANCH): Face or mouth
        cloud (GaussianCloud): Canonical (undeformed) cloud
        deformer (BranchDeformer, optional): Encoder + fusion network; None for static scenes
    """
    branch: BRANCH
    cloud: GaussianCloud
    deformer: Optional[Any] = None


@dataclass
class SceneModel:
    """
    The full head model: a face branch and an optional inside-mouth branch.
    """
    face: BranchModel
    mouth: Optional[BranchModel] = None
    extent: float = 1.0
    metadata: dict = field(default_factory=dict)

    def branches(self) -> list[BranchModel]:
        return [b for b in (self.face, self.mouth) if b is not None]

    def branch(self, which: BRANCH) -> Optional[BranchModel]:
        return self.face if which == BRANCH.FACE else self.mouth
