"""
Camera and screen-space projection data structures.

Pixel coordinates put the center of pixel (i, j) at (i, j); the image rectangle
therefore spans [-0.5, W - 0.5] x [-0.5, H - 0.5] and maps onto NDC [-1, 1]^2 by
x_ndc = 2 (x_px + 0.5) / W - 1.
"""

from dataclasses import dataclass

import numpy as np

from errors import DegenerateInputError

ORTHONORMAL_TOLERANCE = 1e-6


@dataclass
class Camera:
    """
    Pinhole camera with a world-to-camera rigid transform.

    Attributes:
        fx, fy (float): Focal lengths in pixels
        cx, cy (float): Principal point in pixels
        rotation (np.ndarray): (3, 3) world-to-camera rotation
        translation (np.ndarray): (3,) world-to-camera translation
        width, height (int): Image size in pixels
        near (float): Camera-space depth below which Gaussians are culled
    """
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    near: float = 0.2

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.validate()

    def validate(self):
        """
        Raises:
            DegenerateInputError: If the rotation is not a proper rotation or any
                intrinsic is out of range
        """
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise DegenerateInputError("Camera rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=ORTHONORMAL_TOLERANCE):
            raise DegenerateInputError("Camera rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise DegenerateInputError("Camera rotation must have determinant +1")
        if self.width < 1 or self.height < 1:
            raise DegenerateInputError(f"Camera size must be positive, got {self.width}x{self.height}")
        if self.fx <= 0 or self.fy <= 0:
            raise DegenerateInputError("Camera focal lengths must be positive")
        if self.near <= 0:
            raise DegenerateInputError("Camera near plane must be positive")

    @property
    def center(self) -> np.ndarray:
        """World-space camera center, -R^T t."""
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "width": int(self.width), "height": int(self.height),
            "near": float(self.near),
        }

    @staticmethod
    def from_dict(data: dict) -> "Camera":
        return Camera(
            fx=float(data["fx"]), fy=float(data["fy"]),
            cx=float(data["cx"]), cy=float(data["cy"]),
            rotation=np.asarray(data["rotation"], dtype=np.float64),
            translation=np.asarray(data["translation"], dtype=np.float64),
            width=int(data["width"]), height=int(data["height"]),
            near=float(data.get("near", 0.2)),
        )


@dataclass
class Projected2D:
    """
    Screen-space footprint of one Gaussian in one view.

    Attributes:
        center_px (np.ndarray): (2,) pixel coordinates of the projected mean
        center_ndc (np.ndarray): (2,) the same point in NDC
        depth_cam (float): Camera-space depth of the mean
        cov2d (np.ndarray): (2, 2) screen covariance including the low-pass term
        radius_px (float): Screen radius, ceil(3 sqrt(max eigenvalue)); 0 when culled
        culled (bool): True when the mean is at or in front of the near plane
    """
    center_px: np.ndarray
    center_ndc: np.ndarray
    depth_cam: float
    cov2d: np.ndarray
    radius_px: float
    culled: bool


@dataclass
class ProjectedCloud:
    """
    Vectorized projection of a whole cloud, plus the intermediates the backward
    pass reuses.

    Attributes:
        center_px (np.ndarray): (N, 2)
        center_ndc (np.ndarray): (N, 2)
        depth (np.ndarray): (N,) camera-space depth
        cov2d (np.ndarray): (N, 2, 2)
        conic (np.ndarray): (N, 2, 2) inverse of cov2d (zeros where culled)
        radius (np.ndarray): (N,) integer-valued radii as float
        culled (np.ndarray): (N,) bool
        t_cam (np.ndarray): (N, 3) camera-space means
        jacobian (np.ndarray): (N, 2, 3) EWA Jacobian at the mean
        clamp_x, clamp_y (np.ndarray): (N,) bool, frustum clamp active on that axis
        cov3d (np.ndarray): (N, 3, 3) world covariance
        rotations (np.ndarray): (N, 3, 3) rotation matrices of the Gaussians
        scales (np.ndarray): (N, 3) activated scales
    """
    center_px: np.ndarray
    center_ndc: np.ndarray
    depth: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    radius: np.ndarray
    culled: np.ndarray
    t_cam: np.ndarray
    jacobian: np.ndarray
    clamp_x: np.ndarray
    clamp_y: np.ndarray
    cov3d: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray

    @property
    def n(self) -> int:
        return self.center_px.shape[0]

    def entry(self, i: int) -> Projected2D:
        return Projected2D(
            center_px=self.center_px[i].copy(),
            center_ndc=self.center_ndc[i].copy(),
            depth_cam=float(self.depth[i]),
            cov2d=self.cov2d[i].copy(),
            radius_px=float(self.radius[i]),
            culled=bool(self.culled[i]),
        )
