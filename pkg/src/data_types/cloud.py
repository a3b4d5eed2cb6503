"""
Gaussian cloud parameter container.

The cloud stores every parameter in its unconstrained ("raw") space so that any
gradient step keeps it valid: scales live in log-space, opacities in logit-space
and rotations as unnormalized quaternions. Activation happens in logic/gsmath.py.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from errors import ContractViolation

PARAM_NAMES = ("positions", "raw_scales", "raw_rotations", "raw_opacities", "colors")
GEOMETRY_PARAMS = ("positions", "raw_scales", "raw_rotations")
APPEARANCE_PARAMS = ("raw_opacities", "colors")


@dataclass
class GaussianCloud:
    """
    Parameter arrays for N Gaussians.

    Attributes:
        positions (np.ndarray): (N, 3) world-space means
        raw_scales (np.ndarray): (N, 3) log-space scales, activated by exp
        raw_rotations (np.ndarray): (N, 4) unnormalized quaternions (w, x, y, z)
        raw_opacities (np.ndarray): (N,) logit-space opacities, activated by sigmoid
        colors (np.ndarray): (N, 3, B) spherical-harmonic coefficients, B = (deg+1)^2
    """
    positions: np.ndarray
    raw_scales: np.ndarray
    raw_rotations: np.ndarray
    raw_opacities: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.raw_scales = np.asarray(self.raw_scales, dtype=np.float64)
        self.raw_rotations = np.asarray(self.raw_rotations, dtype=np.float64)
        self.raw_opacities = np.asarray(self.raw_opacities, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.float64)
        self.validate()

    def validate(self):
        """
        Check array shapes.

        Raises:
            ContractViolation: If shapes disagree, N < 1 or the SH band count is not 1 or 4
        """
        n = self.positions.shape[0] if self.positions.ndim == 2 else -1
        expected = {
            "positions": (n, 3),
            "raw_scales": (n, 3),
            "raw_rotations": (n, 4),
            "raw_opacities": (n,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ContractViolation(f"GaussianCloud.{name} has shape {getattr(self, name).shape}, expected {shape}")
        if n < 1:
            raise ContractViolation("GaussianCloud needs at least one Gaussian")
        if self.colors.ndim != 3 or self.colors.shape[:2] != (n, 3) or self.colors.shape[2] not in (1, 4):
            raise ContractViolation(f"GaussianCloud.colors has shape {self.colors.shape}, expected ({n}, 3, 1|4)")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return 0 if self.colors.shape[2] == 1 else 1

    def params(self) -> dict[str, np.ndarray]:
        """Return the parameter arrays keyed by name (views, not copies)."""
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(**{name: arr.copy() for name, arr in self.params().items()})

    def take(self, index: np.ndarray) -> "GaussianCloud":
        """Return a new cloud with the rows selected by an index or boolean mask."""
        return GaussianCloud(**{name: arr[index].copy() for name, arr in self.params().items()})

    def with_params(self, **updates) -> "GaussianCloud":
        """Return a copy with some parameter arrays replaced."""
        arrays = {name: arr.copy() for name, arr in self.params().items()}
        arrays.update(updates)
        return GaussianCloud(**arrays)

    @staticmethod
    def concat(clouds: list["GaussianCloud"]) -> "GaussianCloud":
        return GaussianCloud(**{
            name: np.concatenate([getattr(c, name) for c in clouds], axis=0) for name in PARAM_NAMES
        })

    def checksum(self, names: tuple = PARAM_NAMES) -> str:
        """
        Hex digest over the raw bytes of the named arrays.

        Used to verify frozen-attribute contracts between training stages.
        """
        digest = hashlib.sha256()
        for name in names:
            digest.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return digest.hexdigest()
