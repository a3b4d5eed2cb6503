"""
Command orchestration for the splatting engine.

Each cmd_* function implements one subcommand end to end: it validates its inputs,
loads or generates data, runs the numerical core and writes every output file. The
click layer in cli/commands.py only parses flags and calls these functions, so the
commands can be driven from tests or notebooks without a shell.

Outputs of a fit (checkpoint directory):
    model.pgsw          all tensors of the scene (PGSW)
    face.ply, mouth.ply branch clouds (mouth only when present)
    train_log.csv       iter, stage, branch, loss, psnr, N, densified
    densify_log.csv     one row per densify pass
    eval_log.csv        stage, iteration, N, psnr, ssim, region_psnr
    preview_XXXX.png    head renders of the first frames
"""

import os
from typing import Optional

import numpy as np
import pandas as pd

from global_state import state
from errors import ConfigError
from data_types.camera import Camera
from data_types.dataset import Dataset, SceneModel
from data_types.enums import BRANCH, DENSIFY_POLICY, STAGE, SYNTHETIC_RIG
from data_types.features import FrameFeatures
from data_types.run_config import CameraConfig, RunConfig
from data_types.train_types import BenchResult, PipelineResult
from data_types.check_types import GradcheckReport
from logic import gsmath
from logic.densctl import accumulate, decide, decision_frame, scores
from logic.densctl import DensifyStats
from logic.gradcheck import run_gradcheck, SUITES
from logic.losses import loss_l1_dssim
from logic.pipeline import (
    benchmark_render, deform_cloud, init_scene, render_head, run_pipeline,
    supervising_frames, DENSIFY_LOG,
)
from logic.raster import rasterize_backward, rasterize_forward, write_stats_csv
from logic.synthetic import make_rig
from services.checkpoint_io import load_checkpoint, save_checkpoint
from services.feature_io import read_features
from services.image_io import plot_points, write_png
from services.run_logs import read_csv, write_csv
from services.targets_io import load_initial_clouds, load_targets, write_targets

PREVIEW_FRAMES = 4
TRAIN_LOG = "train_log.csv"
EVAL_LOG = "eval_log.csv"
COMPARE_REPORT = "compare_densify.csv"
RENDER_BRANCHES = ("auto", "head", "face", "mouth")


def camera_from_config(cam: Optional[CameraConfig]) -> Camera:
    """
    Build the camera of render/animate/bench from the config's camera section.

    Raises:
        ConfigError: If the config has no camera section
        DegenerateInputError: If the pose is not a proper rotation
    """
    if cam is None:
        state.logger.error("The run configuration has no camera section")
        raise ConfigError("The run configuration has no camera section")
    cx = (cam.width - 1) / 2.0 if cam.cx is None else cam.cx
    cy = (cam.height - 1) / 2.0 if cam.cy is None else cam.cy
    if cam.rotation is not None and cam.translation is not None:
        return Camera(fx=cam.fx, fy=cam.fy, cx=cx, cy=cy, rotation=np.asarray(cam.rotation),
                      translation=np.asarray(cam.translation), width=cam.width, height=cam.height, near=cam.near)
    return gsmath.look_at(cam.eye, cam.target, cam.up, cam.width, cam.height, cam.fx, cam.fy, cx, cy, cam.near)


def load_dataset(cfg: RunConfig, targets: Optional[str] = None) -> tuple[Dataset, dict]:
    """
    The training data of a run: a targets directory when one is given (flag first,
    then config), otherwise the configured synthetic rig.

    Returns:
        tuple: dataset and the initial clouds found next to the targets

    Raises:
        ConfigError: If neither targets nor a synthetic rig is configured
    """
    targets = targets or cfg.data.targets
    if targets:
        dataset = load_targets(targets)
        clouds = load_initial_clouds(targets)
    elif cfg.data.rig is not None:
        dataset = make_rig(cfg.data.rig, cfg.data)
        clouds = {}
    else:
        state.logger.error("No targets directory and no synthetic rig configured")
        raise ConfigError("No targets directory given (--targets or data.targets) and no data.rig configured")
    state.update_flag("datasetLoaded")
    return dataset, clouds


def write_previews(scene: SceneModel, dataset: Dataset, cfg: RunConfig, out_dir: str, count: int = PREVIEW_FRAMES):
    for k, frame in enumerate(dataset.frames[:count]):
        image = render_head(scene, frame.camera, dataset.features_for(frame), cfg.render)
        write_png(image, os.path.join(out_dir, f"preview_{k:04d}.png"))


def write_fit_outputs(scene: SceneModel, result: PipelineResult, dataset: Dataset, cfg: RunConfig, out_dir: str):
    save_checkpoint(scene, out_dir)
    result.log.save(os.path.join(out_dir, TRAIN_LOG))
    write_csv(result.evaluation_frame(), os.path.join(out_dir, EVAL_LOG))
    write_previews(scene, dataset, cfg, out_dir)
    state.update_flag("checkpointWritten")


def cmd_fit(cfg: RunConfig, out_dir: str, targets: Optional[str] = None,
            stages: Optional[list[STAGE]] = None) -> PipelineResult:
    """
    Fit a scene and write a checkpoint directory.

    Args:
        cfg (RunConfig): Validated run configuration
        out_dir (str): Checkpoint directory
        targets (str, optional): Targets directory overriding data.targets
        stages (list[STAGE], optional): Stages to run; all by default, [] copies the
            initialization to the output

    Returns:
        PipelineResult: Logs, densify events and evaluations

    Raises:
        ConfigError: On unusable configuration or data
        InputFileError: On unreadable inputs
        NumericalError: If training diverges (a diverged/ checkpoint is written first)
    """
    stages = list(STAGE) if stages is None else stages
    with state.pipeline_context("fit"):
        dataset, clouds = load_dataset(cfg, targets)
        scene = init_scene(dataset, cfg, clouds.get("face"), clouds.get("mouth"))
        os.makedirs(out_dir, exist_ok=True)
        densify_log = os.path.join(out_dir, DENSIFY_LOG)
        if os.path.exists(densify_log):
            os.remove(densify_log)
        result = run_pipeline(scene, dataset, cfg, stages, out_dir=out_dir)
        write_fit_outputs(scene, result, dataset, cfg, out_dir)
        final = result.final
        if final is not None:
            state.logger.info(f"Fit finished: PSNR={final.psnr:.2f} dB SSIM={final.ssim:.4f} N={final.n}")
        else:
            state.logger.info(f"No stage requested; initialization copied to {out_dir}")
    return result


def _frame_features(features_path: Optional[str], index: int) -> Optional[FrameFeatures]:
    if not features_path:
        return None
    features = read_features(features_path)
    if not 0 <= index < features.n_frames:
        raise ConfigError(f"Feature frame {index} is out of range for {features.n_frames} frames in {features_path}")
    return features.frame(index)


def render_image(scene: SceneModel, camera: Camera, features: Optional[FrameFeatures], cfg: RunConfig,
                 branch: str = "auto") -> np.ndarray:
    """
    Render one image of a scene.

    Args:
        branch (str): "auto" composites when the scene has a mouth branch, "head"
            requires the composite, "face" / "mouth" render a single branch

    Raises:
        ConfigError: If the requested branch (or the composite) is not in the scene
    """
    if branch not in RENDER_BRANCHES:
        raise ConfigError(f"Unknown render branch '{branch}'. Expected one of: {list(RENDER_BRANCHES)}")
    if branch in ("head", "mouth") and scene.mouth is None:
        state.logger.error(f"Cannot render '{branch}': the checkpoint has no mouth branch")
        raise ConfigError(f"Cannot render '{branch}': the checkpoint has no mouth branch to composite")
    if branch == "face":
        return rasterize_forward(deform_cloud(scene.face, features), camera, cfg.render).image
    if branch == "mouth":
        return rasterize_forward(deform_cloud(scene.mouth, features), camera, cfg.render).image
    return render_head(scene, camera, features, cfg.render)


def cmd_render(cfg: RunConfig, checkpoint: str, out_path: str, features_path: Optional[str] = None,
               frame_index: int = 0, branch: str = "auto") -> np.ndarray:
    """
    Render a checkpoint from the config's camera to a PNG.

    Without features the canonical (undeformed) clouds are rendered.
    """
    with state.pipeline_context("render"):
        scene = load_checkpoint(checkpoint)
        camera = camera_from_config(cfg.camera)
        image = render_image(scene, camera, _frame_features(features_path, frame_index), cfg, branch)
        write_png(image, out_path)
        state.logger.info(f"Rendered {camera.width}x{camera.height} image to {out_path}")
    return image


def cmd_animate(cfg: RunConfig, checkpoint: str, features_path: str, out_dir: str,
                start: int = 0, count: Optional[int] = None) -> list[str]:
    """
    Render one numbered PNG per feature frame.

    Returns:
        list[str]: Written frame paths
    """
    with state.pipeline_context("animate"):
        scene = load_checkpoint(checkpoint)
        camera = camera_from_config(cfg.camera)
        features = read_features(features_path)
        stop = features.n_frames if count is None else min(features.n_frames, start + count)
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for f in range(start, stop):
            path = os.path.join(out_dir, f"frame_{f:04d}.png")
            write_png(render_head(scene, camera, features.frame(f), cfg.render), path)
            paths.append(path)
        state.logger.info(f"Animated {len(paths)} frames into {out_dir}")
    return paths


def _with_policy(cfg: RunConfig, policy: DENSIFY_POLICY) -> RunConfig:
    return cfg.model_copy(update={"densify": cfg.densify.model_copy(update={"policy": policy})})


def _event_counts(result: PipelineResult, iteration: int) -> dict:
    events = [e for e in result.densify_events if e.iteration <= iteration]
    return {
        "events": len(events),
        "n_clone": sum(e.n_clone for e in events),
        "n_split": sum(e.n_split for e in events),
        "n_pruned": sum(e.n_pruned for e in events),
    }


def cmd_compare_densify(cfg: RunConfig, out_dir: str, targets: Optional[str] = None,
                        stages: Optional[list[STAGE]] = None) -> pd.DataFrame:
    """
    Two fits that differ only in the densify policy.

    Writes compare_densify.csv (one row per policy and evaluation checkpoint),
    decisions_<policy>.csv and points_<policy>.png (the face cloud projected into the
    first view), plus a full checkpoint per policy under <out>/<policy>/.

    Returns:
        pd.DataFrame: The report
    """
    stages = [STAGE.STATIC] if stages is None else stages
    rows = []
    with state.pipeline_context("compare_densify"):
        dataset, clouds = load_dataset(cfg, targets)
        camera = dataset.frames[0].camera
        for policy in (DENSIFY_POLICY.BASELINE, DENSIFY_POLICY.PIXEL_AWARE):
            run_cfg = _with_policy(cfg, policy)
            run_dir = os.path.join(out_dir, policy.value)
            scene = init_scene(dataset, run_cfg, clouds.get("face"), clouds.get("mouth"))
            if os.path.exists(os.path.join(run_dir, DENSIFY_LOG)):
                os.remove(os.path.join(run_dir, DENSIFY_LOG))
            os.makedirs(run_dir, exist_ok=True)
            result = run_pipeline(scene, dataset, run_cfg, stages, out_dir=run_dir)
            write_fit_outputs(scene, result, dataset, run_cfg, run_dir)

            for record in result.evaluations:
                rows.append({"policy": policy.value, **record.to_row(), **_event_counts(result, record.iteration)})
            write_csv(decision_frame(result.densify_events), os.path.join(out_dir, f"decisions_{policy.value}.csv"))
            projected = gsmath.project_cloud(scene.face.cloud, camera, cfg.render.lowpass)
            points = projected.center_px[~projected.culled]
            plot_points(points, camera.width, camera.height, os.path.join(out_dir, f"points_{policy.value}.png"))
        report = pd.DataFrame(rows)
        write_csv(report, os.path.join(out_dir, COMPARE_REPORT))
        for policy, group in report.groupby("policy", sort=False):
            last = group.iloc[-1]
            region = "" if pd.isna(last["region_psnr"]) else f" region PSNR={last['region_psnr']:.2f} dB"
            state.logger.info(f"{policy}: N={last['N']} PSNR={last['psnr']:.2f} dB SSIM={last['ssim']:.4f}{region}")
    return report


def cmd_gradcheck(cfg: RunConfig, out_path: Optional[str] = None, instances: int = 20,
                  suites: Optional[tuple] = None, fault: Optional[str] = None) -> GradcheckReport:
    """
    Run every finite-difference suite.

    Returns:
        GradcheckReport: One line per parameter class; report.passed is False when any
            class exceeds the tolerance
    """
    with state.pipeline_context("gradcheck"):
        report = run_gradcheck(cfg, instances=instances, suites=suites or SUITES, fault=fault)
        if out_path:
            write_csv(report.frame(), out_path)
        (state.logger.info if report.passed else state.logger.error)(
            f"Gradient check {'passed' if report.passed else 'FAILED'} over {len(report.lines)} parameter classes"
        )
    return report


def branch_densify_stats(scene: SceneModel, dataset: Dataset, cfg: RunConfig,
                         branch: BRANCH = BRANCH.FACE) -> pd.DataFrame:
    """
    Per-Gaussian densify statistics of one branch over every supervising frame,
    with the scores and decisions of both policies.
    """
    model = scene.branch(branch)
    if model is None:
        raise ConfigError(f"The checkpoint has no {branch.value} branch")
    n = model.cloud.n
    per_policy = {policy: DensifyStats.zeros(n) for policy in DENSIFY_POLICY}
    for frame in supervising_frames(dataset.frames, branch):
        mask = frame.mask_for(branch)
        cloud = deform_cloud(model, dataset.features_for(frame))
        artifacts = rasterize_forward(cloud, frame.camera, cfg.render)
        _, d_image = loss_l1_dssim(artifacts.image, frame.image, mask, cfg.loss.lambda_dssim)
        rasterize_backward(cloud, frame.camera, cfg.render, artifacts, d_image)
        for policy in per_policy:
            per_policy[policy] = accumulate(per_policy[policy], artifacts, policy)

    baseline = per_policy[DENSIFY_POLICY.BASELINE]
    table = pd.DataFrame({
        "index": np.arange(n),
        "views_seen": baseline.views_seen,
        "sum_m": per_policy[DENSIFY_POLICY.PIXEL_AWARE].sum_m,
    })
    for policy, stats in per_policy.items():
        column = policy.value.replace("-", "_")
        table[f"score_{column}"] = scores(stats, policy)
        table[f"decision_{column}"] = decide(stats, _with_policy(cfg, policy).densify, model.cloud, scene.extent)
    return table


def cmd_stats(cfg: RunConfig, checkpoint: str, out_path: str, targets: Optional[str] = None,
              branch: BRANCH = BRANCH.FACE) -> pd.DataFrame:
    """
    Dump per-Gaussian statistics.

    With targets the densify accumulators, scores and decisions of both policies are
    computed over every frame; without, a single forward render from the config camera
    dumps (index, valid, R, m). No backward pass runs there, so there is no ndc_grad_norm.
    """
    with state.pipeline_context("stats"):
        scene = load_checkpoint(checkpoint)
        if targets or cfg.data.targets or cfg.data.rig is not None:
            dataset, _ = load_dataset(cfg, targets)
            table = branch_densify_stats(scene, dataset, cfg, branch)
            write_csv(table, out_path)
        else:
            model = scene.branch(branch)
            if model is None:
                raise ConfigError(f"The checkpoint has no {branch.value} branch")
            artifacts = rasterize_forward(model.cloud, camera_from_config(cfg.camera), cfg.render)
            write_stats_csv(artifacts, out_path, gradients=False)
            table = read_csv(out_path)
        state.logger.info(f"Wrote statistics of {len(table)} Gaussians to {out_path}")
    return table


def cmd_bench(cfg: RunConfig, checkpoint: str, features_path: Optional[str] = None, frames: int = 20,
              out_path: Optional[str] = None) -> BenchResult:
    """Time the deform + render + composite path from the config camera."""
    with state.pipeline_context("bench"):
        scene = load_checkpoint(checkpoint)
        camera = camera_from_config(cfg.camera)
        features = None
        if features_path:
            sequence = read_features(features_path)
            features = [sequence.frame(f) for f in range(sequence.n_frames)]
        result = benchmark_render(scene, [camera], features, cfg.render, frames=frames)
        if out_path:
            write_csv(pd.DataFrame([{"frames": result.frames, "ms_per_frame": result.ms_per_frame,
                                     "fps": result.fps}]), out_path)
    return result


def cmd_synth(cfg: RunConfig, rig: SYNTHETIC_RIG, out_dir: str) -> Dataset:
    """Generate a synthetic rig and write it as a targets directory."""
    with state.pipeline_context("synth"):
        dataset = make_rig(rig, cfg.data)
        write_targets(dataset, out_dir)
    return dataset

