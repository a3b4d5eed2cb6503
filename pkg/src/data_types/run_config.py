"""
Run configuration schema.

A run is described by one JSON document with the sections camera, render,
densify, encoder, mgf, schedule, loss and data. Each section is the config type of
the module that consumes it, so the object validated here is the object the code
receives. Unknown keys are rejected at every level to keep experiment provenance
auditable.
"""

import json
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from data_types.enums import DENSIFY_POLICY, FUSION, SYNTHETIC_RIG


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RenderConfig(StrictModel):
    """
    Rasterizer settings.

    Attributes:
        tile_size (int): Tile edge in pixels
        background (tuple): RGB composited behind the residual transmittance
        alpha_min (float): Per-pixel alpha below which a Gaussian is skipped
        transmittance_min (float): Incoming transmittance below which a pixel stops accumulating
        alpha_max (float): Clamp applied to evaluated alpha
        lowpass (float): Screen-space low-pass term added to the covariance diagonal, px^2
        count_coverage (bool): Whether the forward pass counts pixel coverage m
        reference_cap (int): Largest cloud the brute-force reference renderer accepts
    """
    tile_size: int = Field(16, ge=1)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    alpha_min: float = Field(1.0 / 255.0, gt=0.0, lt=1.0)
    transmittance_min: float = Field(1e-4, gt=0.0, lt=1.0)
    alpha_max: float = Field(0.99, gt=0.0, lt=1.0)
    lowpass: float = Field(0.3, ge=0.0)
    count_coverage: bool = True
    reference_cap: int = Field(4096, ge=1)


class DensifyConfig(StrictModel):
    """
    Densification and pruning schedule.

    Attributes:
        tau_pos (float): NDC gradient threshold
        policy (DENSIFY_POLICY): Baseline or pixel-aware scoring
        interval (int): Iterations between densify passes
        start_iter, stop_iter (int): Densify passes run for start_iter <= it < stop_iter
        split_scale_threshold (float): Fraction of the scene extent separating clone from split
        split_factor (float): Divisor applied to the scales of split children
        prune_opacity (float): Opacity floor below which Gaussians are pruned
        max_points (int): Cap on the cloud size after densification
        opacity_reset (bool): Periodically clamp opacities down
        opacity_reset_interval (int): Iterations between opacity resets
        opacity_reset_value (float): Ceiling applied by a reset
    """
    enabled: bool = True
    tau_pos: float = Field(2e-4, gt=0.0)
    policy: DENSIFY_POLICY = DENSIFY_POLICY.PIXEL_AWARE
    interval: int = Field(100, ge=1)
    start_iter: int = Field(500, ge=0)
    stop_iter: int = Field(15000, ge=0)
    split_scale_threshold: float = Field(0.01, gt=0.0)
    split_factor: float = Field(1.6, gt=0.0)
    prune_opacity: float = Field(0.005, ge=0.0, lt=1.0)
    max_points: int = Field(100_000, ge=1)
    opacity_reset: bool = False
    opacity_reset_interval: int = Field(3000, ge=1)
    opacity_reset_value: float = Field(0.01, gt=0.0, lt=1.0)

    @field_validator("policy", mode="before")
    @classmethod
    def parse_policy(cls, value):
        if isinstance(value, str):
            return DENSIFY_POLICY.from_str(value)
        return value


class EncoderConfig(StrictModel):
    """
    Tri-plane hash encoder sizes.

    Attributes:
        levels (int): Resolution levels per plane (L)
        features (int): Features per table entry (F)
        log2_table_size (int): log2 of hash table entries per level (T = 2**log2_table_size)
        base_resolution (int): Coarsest grid resolution (N_min)
        max_resolution (int): Finest grid resolution (N_max)
        init_range (float): Tables are initialized uniformly in [-init_range, init_range]
    """
    levels: int = Field(4, ge=1)
    features: int = Field(2, ge=1)
    log2_table_size: int = Field(14, ge=4, le=24)
    base_resolution: int = Field(16, ge=1)
    max_resolution: int = Field(256, ge=1)
    init_range: float = Field(1e-4, ge=0.0)

    @model_validator(mode="after")
    def check_resolutions(self):
        if self.max_resolution < self.base_resolution:
            raise ValueError("max_resolution must be >= base_resolution")
        return self


class MgfConfig(StrictModel):
    """
    Gated fusion network sizes.

    Attributes:
        projected_dim (int): Width of the per-point projections f_s', f_a', f_e'
        hidden_width (int): Width of each hidden layer of the deformation head
        hidden_layers (int): Number of hidden layers of the deformation head
        face_fusion, mouth_fusion (FUSION): Gated fusion or plain concatenation
        head_init_scale (float): Std of the last head layer at initialization
    """
    projected_dim: int = Field(16, ge=1)
    hidden_width: int = Field(64, ge=1)
    hidden_layers: int = Field(2, ge=1)
    face_fusion: FUSION = FUSION.GATED
    mouth_fusion: FUSION = FUSION.GATED
    head_init_scale: float = Field(1e-3, ge=0.0)


class LossConfig(StrictModel):
    """
    Attributes:
        lambda_dssim (float): Weight of the D-SSIM term
        gamma (float): Weight of the perceptual term in fine-tuning
        hook (str): Registered perceptual hook id, or "off"
    """
    lambda_dssim: float = Field(0.2, ge=0.0)
    gamma: float = Field(0.05, ge=0.0)
    hook: str = "off"


class LearningRates(StrictModel):
    positions: float = Field(2e-3, ge=0.0)
    raw_scales: float = Field(5e-3, ge=0.0)
    raw_rotations: float = Field(1e-3, ge=0.0)
    raw_opacities: float = Field(5e-2, ge=0.0)
    colors: float = Field(1e-2, ge=0.0)
    encoder: float = Field(1e-2, ge=0.0)
    mgf: float = Field(1e-3, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-15, gt=0.0)


class TrainSchedule(StrictModel):
    """
    Stage lengths and optimizer settings.

    Attributes:
        static_iters, deform_iters, finetune_iters (int): Iterations per stage
        lr (LearningRates): Constant learning rate per parameter group
        seed (int): Seed for view order, initialization and split sampling
        log_interval (int): Iterations between progress log lines
        eval_every (int): Iterations between evaluation checkpoints (0 disables)
        densify_in_deform (bool): Keep densifying during the deformation stage
        optimize_base_geometry (bool): Train base positions/scales/rotations in the deformation stage
    """
    static_iters: int = Field(2000, ge=0)
    deform_iters: int = Field(1000, ge=0)
    finetune_iters: int = Field(300, ge=0)
    lr: LearningRates = LearningRates()
    seed: int = 0
    log_interval: int = Field(100, ge=1)
    eval_every: int = Field(0, ge=0)
    densify_in_deform: bool = True
    optimize_base_geometry: bool = True


class CameraConfig(StrictModel):
    """
    Camera used by render/animate/bench.

    Either rotation + translation or eye (+ target, up) must be given.
    """
    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)
    fx: float = Field(80.0, gt=0.0)
    fy: float = Field(80.0, gt=0.0)
    cx: Optional[float] = None
    cy: Optional[float] = None
    near: float = Field(0.2, gt=0.0)
    rotation: Optional[list[list[float]]] = None
    translation: Optional[list[float]] = None
    eye: Optional[list[float]] = None
    target: list[float] = [0.0, 0.0, 0.0]
    up: list[float] = [0.0, -1.0, 0.0]

    @model_validator(mode="after")
    def check_pose(self):
        explicit = self.rotation is not None and self.translation is not None
        if not explicit and self.eye is None:
            raise ValueError("camera needs either rotation+translation or eye")
        return self


class DataConfig(StrictModel):
    """
    Where training frames come from.

    Attributes:
        targets (str): Targets directory; optional when a synthetic rig is named
        rig (SYNTHETIC_RIG): Synthetic rig generated in memory when no targets are given
        seed (int): Seed of the synthetic rig
        n_views (int): Views generated for static rigs
        n_frames (int): Frames generated for the talking rig
        width, height (int): Synthetic image size
        init_points (int): Gaussians per branch in a random initialization
        init_sh_degree (int): SH degree of a random initialization
    """
    targets: Optional[str] = None
    rig: Optional[SYNTHETIC_RIG] = None
    seed: int = 0
    n_views: int = Field(4, ge=1)
    n_frames: int = Field(24, ge=1)
    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)
    init_points: int = Field(32, ge=1)
    init_sh_degree: int = Field(0, ge=0, le=1)


class RunConfig(StrictModel):
    camera: Optional[CameraConfig] = None
    render: RenderConfig = RenderConfig()
    densify: DensifyConfig = DensifyConfig()
    encoder: EncoderConfig = EncoderConfig()
    mgf: MgfConfig = MgfConfig()
    schedule: TrainSchedule = TrainSchedule()
    loss: LossConfig = LossConfig()
    data: DataConfig = DataConfig()


def parse_run_config(document: dict) -> RunConfig:
    """
    Validate a parsed JSON document.

    Args:
        document (dict): Parsed JSON

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: On any schema violation, with every violation listed
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid run configuration: {problems}")


def load_run_config(path: str) -> RunConfig:
    """
    Read and validate a JSON run configuration file.

    Args:
        path (str): JSON file

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: If the file is missing, is not JSON or violates the schema
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read run configuration {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Run configuration {path} is not valid JSON: {e}")
    if not isinstance(document, dict):
        raise ConfigError(f"Run configuration {path} must be a JSON object")
    return parse_run_config(document)
