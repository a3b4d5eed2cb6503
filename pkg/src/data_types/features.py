"""
Per-frame driving features.

Audio vectors stand in for the output of a speech encoder and expression vectors for
non-mouth action units; both are ingested from PGSF files and broadcast to every
Gaussian of a branch.
"""

from dataclasses import dataclass

import numpy as np

from errors import ContractViolation


@dataclass
class FrameFeatures:
    """
    Attributes:
        audio (np.ndarray): (D_a,) audio feature f_a
        expression (np.ndarray): (D_e,) expression feature f_e
    """
    audio: np.ndarray
    expression: np.ndarray

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float64).reshape(-1)
        self.expression = np.asarray(self.expression, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(self.audio)) and np.all(np.isfinite(self.expression))):
            raise ContractViolation("Frame features must be finite")


@dataclass
class FeatureSequence:
    """
    Features of a whole sequence.

    Attributes:
        audio (np.ndarray): (F, D_a)
        expression (np.ndarray): (F, D_e)
    """
    audio: np.ndarray
    expression: np.ndarray

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float64)
        self.expression = np.asarray(self.expression, dtype=np.float64)
        if self.audio.ndim != 2 or self.expression.ndim != 2:
            raise ContractViolation("Feature sequences must be 2-D (frames x dims)")
        if self.audio.shape[0] != self.expression.shape[0]:
            raise ContractViolation(
                f"Audio has {self.audio.shape[0]} frames but expression has {self.expression.shape[0]}"
            )
        if not (np.all(np.isfinite(self.audio)) and np.all(np.isfinite(self.expression))):
            raise ContractViolation("Feature sequences must be finite")

    @property
    def n_frames(self) -> int:
        return self.audio.shape[0]

    @property
    def dim_audio(self) -> int:
        return self.audio.shape[1]

    @property
    def dim_expression(self) -> int:
        return self.expression.shape[1]

    def frame(self, index: int) -> FrameFeatures:
        return FrameFeatures(audio=self.audio[index], expression=self.expression[index])

    def __len__(self) -> int:
        return self.n_frames
