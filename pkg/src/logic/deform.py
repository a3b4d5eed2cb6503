"""
Audio-driven deformation of a branch cloud.

A BranchDeformer chains the tri-plane hash encoder and the branch's fusion network:

    f_s = encode(mu_base)  ->  MGF(f_s, f_a, f_e)  ->  deltas  ->  apply_deformation

Only positions, raw scales and raw rotations are deformed; opacities and colors pass
through untouched.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ContractViolation
from data_types.cloud import GaussianCloud
from data_types.enums import BRANCH, FUSION
from data_types.features import FrameFeatures
from data_types.run_config import EncoderConfig, MgfConfig
from logic.hash_encoder import TriPlaneHashEncoder, EncodingCache
from logic.mgf import MgfParams, MgfCache


@dataclass
class DeformationDeltas:
    """
    Attributes:
        positions (np.ndarray): (N, 3) delta mu
        raw_scales (np.ndarray): (N, 3) delta of log-scales
        raw_rotations (np.ndarray): (N, 4) delta of raw quaternions
    """
    positions: np.ndarray
    raw_scales: np.ndarray
    raw_rotations: np.ndarray

    @staticmethod
    def zeros(n: int) -> "DeformationDeltas":
        return DeformationDeltas(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)))

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def apply_deformation(cloud: GaussianCloud, deltas: DeformationDeltas) -> GaussianCloud:
    """
    Deform a cloud.

    Args:
        cloud (GaussianCloud): Canonical cloud
        deltas (DeformationDeltas): Per-Gaussian offsets

    Returns:
        GaussianCloud: positions + d_mu, raw_scales + d_s, raw_rotations + d_q; opacity
            and color arrays are copied bit for bit

    Raises:
        ContractViolation: If the deltas do not have N rows
    """
    if deltas.n != cloud.n:
        raise ContractViolation(f"Deformation has {deltas.n} rows, cloud has {cloud.n}")
    return cloud.with_params(
        positions=cloud.positions + deltas.positions,
        raw_scales=cloud.raw_scales + deltas.raw_scales,
        raw_rotations=cloud.raw_rotations + deltas.raw_rotations,
    )


@dataclass
class DeformCache:
    encoding: EncodingCache
    network: MgfCache
    n: int


class BranchDeformer:
    """
    Encoder plus fusion network of one branch.

    Attributes:
        branch (BRANCH): Face or mouth
        encoder (TriPlaneHashEncoder): Spatial feature field
        network (MgfParams): Fusion network
    """

    def __init__(self, branch: BRANCH, encoder: TriPlaneHashEncoder, network: MgfParams):
        self.branch = branch
        self.encoder = encoder
        self.network = network

    @staticmethod
    def create(branch: BRANCH, positions: np.ndarray, encoder_cfg: EncoderConfig, mgf_cfg: MgfConfig,
               dim_audio: int, dim_expression: int, seed: int = 0,
               fusion: Optional[FUSION] = None) -> "BranchDeformer":
        """Fresh deformer whose encoder box bounds the given canonical positions."""
        encoder = TriPlaneHashEncoder.from_points(encoder_cfg, positions, seed=seed)
        network = MgfParams(branch, mgf_cfg, encoder.output_dim, dim_audio,
                            dim_expression if branch == BRANCH.FACE else 0,
                            seed=seed + 1, fusion=fusion)
        return BranchDeformer(branch, encoder, network)

    def params(self) -> dict[str, np.ndarray]:
        """Trainable arrays keyed 'encoder.<name>' and 'mgf.<name>' (views, not copies)."""
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"mgf.{k}": v for k, v in self.network.params.items()})
        return out

    def set_param(self, key: str, value: np.ndarray):
        group, name = key.split(".", 1)
        if group == "encoder" and name == "tables":
            self.encoder.tables = value
        elif group == "mgf" and name in self.network.params:
            self.network.params[name] = value
        else:
            raise KeyError(key)

    def forward(self, cloud: GaussianCloud, frame: FrameFeatures) -> tuple[DeformationDeltas, DeformCache]:
        """
        Predict the deformation of a canonical cloud for one frame.

        Returns:
            tuple: deltas and the cache for backward
        """
        f_s, enc_cache = self.encoder.encode(cloud.positions)
        out, net_cache = self.network.forward(f_s, frame.audio, frame.expression)
        n = cloud.n
        if self.branch == BRANCH.MOUTH:
            deltas = DeformationDeltas(out, np.zeros((n, 3)), np.zeros((n, 4)))
        else:
            deltas = DeformationDeltas(out[:, 0:3].copy(), out[:, 3:6].copy(), out[:, 6:10].copy())
        return deltas, DeformCache(enc_cache, net_cache, n)

    def backward(self, cache: DeformCache, d_deltas: DeformationDeltas) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """
        Carry gradients of the deltas into the deformer parameters and the base positions.

        Args:
            cache (DeformCache): From forward
            d_deltas (DeformationDeltas): dL/d deltas, which equal dL/d deformed parameters

        Returns:
            tuple: gradients keyed like params() and dL/d mu_base through the encoder
                (the direct identity path mu_def = mu_base + d_mu is not included)
        """
        if self.branch == BRANCH.MOUTH:
            d_out = d_deltas.positions
        else:
            d_out = np.concatenate([d_deltas.positions, d_deltas.raw_scales, d_deltas.raw_rotations], axis=1)
        net_grads, d_f_s = self.network.backward(cache.network, d_out)
        d_tables, d_positions = self.encoder.backward(cache.encoding, d_f_s)
        grads = {"encoder.tables": d_tables}
        grads.update({f"mgf.{k}": v for k, v in net_grads.items()})
        return grads, d_positions
