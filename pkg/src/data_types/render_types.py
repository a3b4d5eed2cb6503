"""
Render outputs and gradient containers.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from data_types.camera import ProjectedCloud


@dataclass
class GaussianRenderStats:
    """
    Per-Gaussian bookkeeping of one render.

    Attributes:
        radius (np.ndarray): (N,) screen radius R in pixels (0 when culled)
        coverage (np.ndarray): (N,) int, pixels the Gaussian contributed to (m)
        valid (np.ndarray): (N,) bool, the depth/bounds validity test
        ndc_grad_norm (np.ndarray): (N,) norm of dL/d(center_ndc); zeros until backward ran
        ndc_grad (np.ndarray): (N, 2) dL/d(center_ndc); zeros until backward ran
        saturated (np.ndarray): (N,) int, pixels where the evaluated alpha hit the clamp
        depth (np.ndarray): (N,) camera-space depth
        center_ndc (np.ndarray): (N, 2)
    """
    radius: np.ndarray
    coverage: np.ndarray
    valid: np.ndarray
    ndc_grad_norm: np.ndarray
    ndc_grad: np.ndarray
    saturated: np.ndarray
    depth: np.ndarray
    center_ndc: np.ndarray

    @property
    def n(self) -> int:
        return self.radius.shape[0]


@dataclass
class TileBin:
    """Pixel rectangle [x0, x1) x [y0, y1) and the depth-ordered Gaussians touching it."""
    x0: int
    y0: int
    x1: int
    y1: int
    gaussians: np.ndarray


@dataclass
class RenderArtifacts:
    """
    Output of a forward render.

    Attributes:
        image (np.ndarray): (H, W, 3) linear RGB
        final_transmittance (np.ndarray): (H, W) transmittance left after the last contribution
        per_gaussian (GaussianRenderStats): Per-Gaussian bookkeeping
        projection (ProjectedCloud): Screen-space projection reused by backward
        colors (np.ndarray): (N, 3) view-dependent colors after clamping
        color_clamped (np.ndarray): (N, 3) bool, channels clamped to [0, 1]
        view_dirs (np.ndarray): (N, 3) unit directions from the camera center to the means
        order (np.ndarray): (N,) global front-to-back order
        tiles (list[TileBin]): Tile bins (a single full-image bin for the reference renderer)
        background (np.ndarray): (3,)
        n_gaussians (int): Size of the rendered cloud
    """
    image: np.ndarray
    final_transmittance: np.ndarray
    per_gaussian: GaussianRenderStats
    projection: ProjectedCloud
    colors: np.ndarray
    color_clamped: np.ndarray
    view_dirs: np.ndarray
    order: np.ndarray
    tiles: list = field(default_factory=list)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_gaussians: int = 0

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        """Accumulated opacity, 1 - final transmittance."""
        return 1.0 - self.final_transmittance


@dataclass
class ParamGrads:
    """
    Gradients of a scalar loss with respect to every cloud parameter.

    Attributes mirror GaussianCloud; ndc holds dL/d(center_ndc) per Gaussian.
    """
    positions: np.ndarray
    raw_scales: np.ndarray
    raw_rotations: np.ndarray
    raw_opacities: np.ndarray
    colors: np.ndarray
    ndc: Optional[np.ndarray] = None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "positions": self.positions,
            "raw_scales": self.raw_scales,
            "raw_rotations": self.raw_rotations,
            "raw_opacities": self.raw_opacities,
            "colors": self.colors,
        }

    @staticmethod
    def zeros_like(cloud) -> "ParamGrads":
        return ParamGrads(
            positions=np.zeros_like(cloud.positions),
            raw_scales=np.zeros_like(cloud.raw_scales),
            raw_rotations=np.zeros_like(cloud.raw_rotations),
            raw_opacities=np.zeros_like(cloud.raw_opacities),
            colors=np.zeros_like(cloud.colors),
            ndc=np.zeros((cloud.n, 2)),
        )
