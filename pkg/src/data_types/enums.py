"""
Enumeration definitions for the splatting engine.

This module contains all enumeration types used throughout the application to
define valid values for densification policies, training stages, scene branches,
densification decisions and fusion modes.
"""

from enum import Enum


class DENSIFY_POLICY(Enum):
    """
    Score used to decide which Gaussians are cloned or split.

    BASELINE averages the NDC gradient norm over the views that observed the
    Gaussian. PIXEL_AWARE weights each view's gradient norm by the number of
    pixels the Gaussian covered in that view.
    """
    BASELINE = "baseline"
    PIXEL_AWARE = "pixel-aware"

    @classmethod
    def from_str(cls, value: str) -> 'DENSIFY_POLICY':
        """
        Parse a policy name, accepting '-' and '_' spellings.

        Args:
            value (str): Policy name, e.g. "pixel-aware" or "pixel_aware"

        Returns:
            DENSIFY_POLICY: The matching policy

        Raises:
            ValueError: If the name matches no policy
        """
        normalized = value.strip().lower().replace("_", "-")
        for policy in cls:
            if policy.value == normalized:
                return policy
        raise ValueError(f"Unknown densify policy '{value}'. Expected one of: {[p.value for p in cls]}")


class STAGE(Enum):
    """Training stages, in pipeline order."""
    STATIC = "static"
    DEFORM = "deform"
    FINETUNE = "finetune"


class BRANCH(Enum):
    """Independently modeled Gaussian clouds composited into the head image."""
    FACE = "face"
    MOUTH = "mouth"


class DECISION(Enum):
    """Per-Gaussian outcome of a densification pass."""
    NONE = 0
    CLONE = 1
    SPLIT = 2


class FUSION(Enum):
    """
    How a branch fuses spatial, audio and expression features.

    GATED is the multimodal gated fusion; CONCAT removes the gate and feeds the
    plain concatenation to the head (the ablation without gated fusion).
    """
    GATED = "gated"
    CONCAT = "concat"


class SYNTHETIC_RIG(Enum):
    """Synthetic targets the engine can generate for self-reconstruction experiments."""
    BLOBS = "blobs"
    STRIPE = "stripe"
    TALKING = "talking"
