"""
Dual-branch head compositing.

The face branch is rendered on a black background; the inside-mouth branch is drawn
behind it wherever the face is not opaque:

    C_head = C_face * A_face + C_mouth * (1 - A_face),   A_face = 1 - T_face
"""

import numpy as np

from global_state import state
from errors import ContractViolation
from data_types.render_types import RenderArtifacts


def composite_images(face_image: np.ndarray, face_alpha: np.ndarray, mouth_image: np.ndarray) -> np.ndarray:
    if face_image.shape != mouth_image.shape or face_alpha.shape != face_image.shape[:2]:
        state.logger.error(f"Cannot composite {face_image.shape} face over {mouth_image.shape} mouth")
        raise ContractViolation(f"Cannot composite {face_image.shape} face over {mouth_image.shape} mouth")
    a = face_alpha[:, :, None]
    return face_image * a + mouth_image * (1.0 - a)


def composite_head(face: RenderArtifacts, mouth: RenderArtifacts) -> np.ndarray:
    """
    Composite the face render over the mouth render.

    Args:
        face (RenderArtifacts): Face branch, rendered on a black background
        mouth (RenderArtifacts): Inside-mouth branch with its own background

    Returns:
        np.ndarray: (H, W, 3) head image

    Raises:
        ContractViolation: If the two renders differ in size
    """
    return composite_images(face.image, face.alpha, mouth.image)


def composite_backward(face: RenderArtifacts, mouth: RenderArtifacts,
                       d_head: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Split dL/d C_head into image gradients of the two branch renders, holding the
    face alpha fixed. Fine-tuning only moves colors, which leave A_face unchanged.

    Returns:
        tuple: dL/d face image (H, W, 3) and dL/d mouth image (H, W, 3)
    """
    a = face.alpha[:, :, None]
    return d_head * a, d_head * (1.0 - a)
