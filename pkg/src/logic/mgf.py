"""
Multimodal gated fusion networks.

Per-point 1x1 convolutions are shared linear layers, so every network here is a
small stack of dense layers over per-point feature rows. Audio and expression
features are per-frame vectors broadcast to every point of the branch; per-point
variation enters through the spatial feature f_s only.

Mouth branch (gated):
    f_s' = proj_s(f_s), f_a' = proj_a(f_a)
    w = sigmoid(gate([f_s'; f_a'])), f_a~ = w * f_a'
    d_mu = head([f_s'; f_a~])

Face branch (gated):
    f_a' = proj_a(f_a), f_e' = proj_e(f_e)
    w = sigmoid(gate([f_a'; f_e'])), f_ae = [w * f_a'; f_e']
    (d_mu, d_raw_scale, d_raw_quat) = head([f_a; f_ae; f_s])

With FUSION.CONCAT the gate is removed (w = 1 with no parameters).
"""

from dataclasses import dataclass, field

import numpy as np

from global_state import state
from errors import ContractViolation
from data_types.enums import BRANCH, FUSION
from data_types.run_config import MgfConfig
from logic.gsmath import sigmoid

MOUTH_OUTPUTS = 3
FACE_OUTPUTS = 10


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int, std: float = None) -> tuple[np.ndarray, np.ndarray]:
    std = 1.0 / np.sqrt(fan_in) if std is None else std
    return rng.normal(0.0, std, size=(fan_in, fan_out)), np.zeros(fan_out)


@dataclass
class MgfCache:
    f_s: np.ndarray
    f_a: np.ndarray
    f_e: np.ndarray
    s_proj: np.ndarray = None
    a_proj: np.ndarray = None
    e_proj: np.ndarray = None
    gate_in: np.ndarray = None
    omega: np.ndarray = None
    fused: np.ndarray = None
    pre_acts: list = field(default_factory=list)
    acts: list = field(default_factory=list)


class MgfParams:
    """
    Weights of one branch's fusion network.

    Parameters are kept in a flat dict (name -> array) so optimizers and checkpoint
    writers can walk them without knowing the architecture.

    Attributes:
        branch (BRANCH): Face or mouth
        fusion (FUSION): Gated fusion or plain concatenation
        dims (tuple): (D_s, D_a, D_e) input widths
        params (dict[str, np.ndarray]): Weights and biases
    """

    def __init__(self, branch: BRANCH, cfg: MgfConfig, dim_spatial: int, dim_audio: int,
                 dim_expression: int = 0, seed: int = 0, fusion: FUSION = None):
        self.branch = branch
        self.cfg = cfg
        self.fusion = fusion or (cfg.face_fusion if branch == BRANCH.FACE else cfg.mouth_fusion)
        self.dims = (dim_spatial, dim_audio, dim_expression)
        if branch == BRANCH.FACE and dim_expression < 1:
            raise ContractViolation("The face branch needs expression features")
        rng = np.random.default_rng(seed)
        p = cfg.projected_dim
        self.params: dict[str, np.ndarray] = {}

        if branch == BRANCH.MOUTH:
            self._add(rng, "proj_s", dim_spatial, p)
            self._add(rng, "proj_a", dim_audio, p)
            if self.fusion == FUSION.GATED:
                self._add(rng, "gate", 2 * p, p)
            fused_dim = 2 * p
            out_dim = MOUTH_OUTPUTS
        else:
            self._add(rng, "proj_a", dim_audio, p)
            self._add(rng, "proj_e", dim_expression, p)
            if self.fusion == FUSION.GATED:
                self._add(rng, "gate", 2 * p, p)
            fused_dim = dim_audio + 2 * p + dim_spatial
            out_dim = FACE_OUTPUTS

        width = fused_dim
        for layer in range(cfg.hidden_layers):
            self._add(rng, f"head.{layer}", width, cfg.hidden_width)
            width = cfg.hidden_width
        self._add(rng, "head.out", width, out_dim, std=cfg.head_init_scale)
        self.fused_dim = fused_dim
        self.out_dim = out_dim

    def _add(self, rng, name: str, fan_in: int, fan_out: int, std: float = None):
        w, b = _init_linear(rng, fan_in, fan_out, std)
        self.params[f"{name}.W"] = w
        self.params[f"{name}.b"] = b

    def _linear(self, name: str, x: np.ndarray) -> np.ndarray:
        return x @ self.params[f"{name}.W"] + self.params[f"{name}.b"]

    def head_layers(self) -> list[str]:
        return [f"head.{i}" for i in range(self.cfg.hidden_layers)] + ["head.out"]

    def _check(self, f_s: np.ndarray, f_a: np.ndarray, f_e: np.ndarray):
        ds, da, de = self.dims
        if f_s.ndim != 2 or f_s.shape[1] != ds:
            raise ContractViolation(f"{self.branch.value} fusion expects spatial features of width {ds}, got {f_s.shape}")
        if f_a.shape != (da,):
            raise ContractViolation(f"{self.branch.value} fusion expects audio features of width {da}, got {f_a.shape}")
        if self.branch == BRANCH.FACE and f_e.shape != (de,):
            raise ContractViolation(f"face fusion expects expression features of width {de}, got {f_e.shape}")

    def forward(self, f_s: np.ndarray, f_a: np.ndarray, f_e: np.ndarray = None) -> tuple[np.ndarray, MgfCache]:
        """
        Run the network on N points of one frame.

        Args:
            f_s (np.ndarray): (N, D_s) spatial features
            f_a (np.ndarray): (D_a,) audio features of the frame
            f_e (np.ndarray, optional): (D_e,) expression features (face branch)

        Returns:
            tuple: outputs (N, 3) for the mouth or (N, 10) for the face, and the cache

        Raises:
            ContractViolation: On any dimension mismatch
        """
        f_s = np.atleast_2d(np.asarray(f_s, dtype=np.float64))
        f_a = np.asarray(f_a, dtype=np.float64).reshape(-1)
        f_e = np.zeros(0) if f_e is None else np.asarray(f_e, dtype=np.float64).reshape(-1)
        try:
            self._check(f_s, f_a, f_e)
        except ContractViolation as e:
            state.logger.error(str(e))
            raise
        n = f_s.shape[0]
        cache = MgfCache(f_s=f_s, f_a=f_a, f_e=f_e)
        cache.a_proj = self._linear("proj_a", f_a[None, :])

        if self.branch == BRANCH.MOUTH:
            cache.s_proj = self._linear("proj_s", f_s)
            a_rows = np.repeat(cache.a_proj, n, axis=0)
            if self.fusion == FUSION.GATED:
                cache.gate_in = np.concatenate([cache.s_proj, a_rows], axis=1)
                cache.omega = sigmoid(self._linear("gate", cache.gate_in))
                gated = cache.omega * a_rows
            else:
                gated = a_rows
            fused = np.concatenate([cache.s_proj, gated], axis=1)
        else:
            cache.e_proj = self._linear("proj_e", f_e[None, :])
            if self.fusion == FUSION.GATED:
                cache.gate_in = np.concatenate([cache.a_proj, cache.e_proj], axis=1)
                cache.omega = sigmoid(self._linear("gate", cache.gate_in))
                gated = cache.omega * cache.a_proj
            else:
                gated = cache.a_proj
            frame_part = np.concatenate([f_a[None, :], gated, cache.e_proj], axis=1)
            fused = np.concatenate([np.repeat(frame_part, n, axis=0), f_s], axis=1)

        cache.fused = fused
        x = fused
        layers = self.head_layers()
        for name in layers[:-1]:
            pre = self._linear(name, x)
            cache.pre_acts.append(pre)
            cache.acts.append(x)
            x = silu(pre)
        cache.acts.append(x)
        return self._linear(layers[-1], x), cache

    def backward(self, cache: MgfCache, d_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """
        Args:
            cache (MgfCache): From forward
            d_out (np.ndarray): (N, out_dim) gradient w.r.t. the outputs

        Returns:
            tuple: gradients keyed like params, and dL/d f_s (N, D_s)
        """
        grads = {name: np.zeros_like(arr) for name, arr in self.params.items()}
        layers = self.head_layers()
        g = d_out
        x = cache.acts[-1]
        grads[f"{layers[-1]}.W"] = x.T @ g
        grads[f"{layers[-1]}.b"] = g.sum(axis=0)
        g = g @ self.params[f"{layers[-1]}.W"].T
        for i in range(len(layers) - 2, -1, -1):
            name = layers[i]
            g = g * silu_grad(cache.pre_acts[i])
            grads[f"{name}.W"] = cache.acts[i].T @ g
            grads[f"{name}.b"] = g.sum(axis=0)
            g = g @ self.params[f"{name}.W"].T
        d_fused = g
        p = self.cfg.projected_dim

        if self.branch == BRANCH.MOUTH:
            d_s_proj = d_fused[:, :p].copy()
            d_gated = d_fused[:, p:]
            a_rows = np.repeat(cache.a_proj, cache.f_s.shape[0], axis=0)
            if self.fusion == FUSION.GATED:
                d_a_rows = d_gated * cache.omega
                d_z = d_gated * a_rows * cache.omega * (1.0 - cache.omega)
                grads["gate.W"] = cache.gate_in.T @ d_z
                grads["gate.b"] = d_z.sum(axis=0)
                d_gate_in = d_z @ self.params["gate.W"].T
                d_s_proj += d_gate_in[:, :p]
                d_a_rows = d_a_rows + d_gate_in[:, p:]
            else:
                d_a_rows = d_gated
            d_a_proj = d_a_rows.sum(axis=0, keepdims=True)
            grads["proj_s.W"] = cache.f_s.T @ d_s_proj
            grads["proj_s.b"] = d_s_proj.sum(axis=0)
            d_f_s = d_s_proj @ self.params["proj_s.W"].T
        else:
            da = self.dims[1]
            d_frame = d_fused[:, :da + 2 * p].sum(axis=0, keepdims=True)
            d_f_s = d_fused[:, da + 2 * p:]
            d_gated = d_frame[:, da:da + p]
            d_e_proj = d_frame[:, da + p:da + 2 * p].copy()
            if self.fusion == FUSION.GATED:
                d_a_proj = d_gated * cache.omega
                d_z = d_gated * cache.a_proj * cache.omega * (1.0 - cache.omega)
                grads["gate.W"] = cache.gate_in.T @ d_z
                grads["gate.b"] = d_z.sum(axis=0)
                d_gate_in = d_z @ self.params["gate.W"].T
                d_a_proj = d_a_proj + d_gate_in[:, :p]
                d_e_proj += d_gate_in[:, p:]
            else:
                d_a_proj = d_gated
            grads["proj_e.W"] = cache.f_e[:, None] @ d_e_proj
            grads["proj_e.b"] = d_e_proj.reshape(-1)

        grads["proj_a.W"] = cache.f_a[:, None] @ d_a_proj
        grads["proj_a.b"] = d_a_proj.reshape(-1)
        return grads, d_f_s


def mgf_mouth_forward(params: MgfParams, f_s: np.ndarray, f_a: np.ndarray) -> np.ndarray:
    """Position deformation (N, 3) of the inside-mouth branch."""
    if params.branch != BRANCH.MOUTH:
        raise ContractViolation("mgf_mouth_forward needs mouth-branch parameters")
    out, _ = params.forward(f_s, f_a)
    return out


def mgf_face_forward(params: MgfParams, f_s: np.ndarray, f_a: np.ndarray,
                     f_e: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, raw-scale and raw-quaternion deformations (N, 3), (N, 3), (N, 4) of the face branch."""
    if params.branch != BRANCH.FACE:
        raise ContractViolation("mgf_face_forward needs face-branch parameters")
    out, _ = params.forward(f_s, f_a, f_e)
    return out[:, 0:3], out[:, 3:6], out[:, 6:10]
