"""
Three-stage training of a dual-branch head model.

    static    per branch: render -> masked L1 + D-SSIM -> backward -> Adam, with
              density control on the configured policy
    deform    per branch: encoder + fusion network predict per-frame deltas of the
              geometry; colors and opacities stay frozen
    finetune  both branches jointly: composite the head, full-frame loss, colors only;
              the point count is fixed

The branches are trained independently in the first two stages. Global iteration
numbers continue across stages, so densify events and log rows of a run never
collide.
"""

import copy
import os
import time
from typing import Optional

import numpy as np
from tqdm import tqdm

from global_state import state
from config import config
from errors import ConfigError, NumericalError
from data_types.camera import Camera
from data_types.cloud import GaussianCloud, GEOMETRY_PARAMS
from data_types.dataset import Dataset, Frame, SceneModel, BranchModel
from data_types.enums import BRANCH, STAGE
from data_types.features import FrameFeatures
from data_types.run_config import RunConfig, RenderConfig, LearningRates
from data_types.train_types import EvalRecord, PipelineResult, BenchResult
from logic import gsmath, metrics
from logic.compositing import composite_head, composite_backward
from logic.deform import BranchDeformer, DeformationDeltas, apply_deformation
from logic.densctl import DensifyController, reset_opacity
from logic.losses import loss_l1_dssim, loss_finetune
from logic.optimizer import Adam
from logic.raster import rasterize_forward, rasterize_backward
from logic.synthetic import random_cloud
from services.checkpoint_io import save_checkpoint
from services.run_logs import TrainLog

BLACK = (0.0, 0.0, 0.0)
DIVERGED_DIR = "diverged"
DENSIFY_LOG = "densify_log.csv"
STAGE_FLAGS = {
    STAGE.STATIC: "staticStageDone",
    STAGE.DEFORM: "deformStageDone",
    STAGE.FINETUNE: "finetuneStageDone",
}
BRANCH_INDEX = {BRANCH.FACE: 0, BRANCH.MOUTH: 1}


def init_scene(dataset: Dataset, cfg: RunConfig, face_cloud: Optional[GaussianCloud] = None,
               mouth_cloud: Optional[GaussianCloud] = None) -> SceneModel:
    """
    Initial scene for a fit.

    Missing clouds are drawn with random_cloud. A mouth branch exists when a mouth
    cloud is given or any frame carries a non-empty mouth mask.

    Returns:
        SceneModel: Scene whose extent is the bounding radius of the dataset cameras
    """
    data = cfg.data
    extent = gsmath.scene_extent(dataset.cameras)
    if face_cloud is None:
        face_cloud = random_cloud(data.init_points, seed=cfg.schedule.seed, sh_degree=data.init_sh_degree)
    wants_mouth = mouth_cloud is not None or any(
        f.mouth_mask is not None and f.mouth_mask.any() for f in dataset.frames
    )
    mouth = None
    if wants_mouth:
        if mouth_cloud is None:
            mouth_cloud = random_cloud(data.init_points, seed=cfg.schedule.seed + 1, radius=0.3,
                                       sh_degree=data.init_sh_degree, center=(0.0, 0.0, 0.5))
        mouth = BranchModel(BRANCH.MOUTH, mouth_cloud)
    state.logger.info(
        f"Initialized scene: face N={face_cloud.n}, mouth N={mouth_cloud.n if mouth else 0}, extent={extent:.3f}"
    )
    return SceneModel(face=BranchModel(BRANCH.FACE, face_cloud), mouth=mouth, extent=extent)


def _cloud_lr(lr: LearningRates, names) -> dict[str, float]:
    return {name: getattr(lr, name) for name in names}


def _deformer_lr(lr: LearningRates, deformer: BranchDeformer) -> dict[str, float]:
    return {key: lr.encoder if key.startswith("encoder.") else lr.mgf for key in deformer.params()}


def _optimizer(lr: LearningRates, rates: dict[str, float]) -> Adam:
    return Adam(rates, betas=(lr.beta1, lr.beta2), eps=lr.eps)


def frame_order(n_frames: int, iterations: int, seed) -> np.ndarray:
    """Frame index per iteration: concatenated seeded permutations (one per epoch)."""
    if iterations <= 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    epochs = -(-iterations // n_frames)
    return np.concatenate([rng.permutation(n_frames) for _ in range(epochs)])[:iterations]


def _progress(iterations: int, desc: str):
    return tqdm(range(iterations), desc=desc, disable=None if config.PROGRESS else True, leave=False)


def supervising_frames(frames: list[Frame], branch: BRANCH) -> list[Frame]:
    """Frames that supervise a branch: a non-empty mask, or no mask for the face."""
    out = []
    for frame in frames:
        mask = frame.mask_for(branch)
        if mask is None:
            if branch == BRANCH.FACE:
                out.append(frame)
        elif mask.any():
            out.append(frame)
    return out


def _finite_scene(scene: SceneModel) -> bool:
    for model in scene.branches():
        if not all(np.all(np.isfinite(a)) for a in model.cloud.params().values()):
            return False
        if model.deformer is not None and not all(np.all(np.isfinite(a)) for a in model.deformer.params().values()):
            return False
    return True


class DivergenceGuard:
    """
    Aborts a stage on a non-finite loss or gradient.

    A snapshot of the scene is taken every `interval` iterations; when training
    diverges the most recent finite state (the live scene if it is still finite,
    otherwise the snapshot) is written to <out_dir>/diverged before the error is raised.
    """

    def __init__(self, scene: SceneModel, out_dir: Optional[str], interval: int):
        self.scene = scene
        self.out_dir = out_dir
        self.interval = interval
        self.snapshot = copy.deepcopy(scene)

    def commit(self, iteration: int):
        if iteration % self.interval == 0:
            self.snapshot = copy.deepcopy(self.scene)

    def check_loss(self, loss: float, stage: STAGE, branch: str, iteration: int):
        if not np.isfinite(loss):
            raise NumericalError(f"Non-finite loss in {stage.value} stage ({branch}) at iteration {iteration}",
                                 group="loss")

    def fail(self, error: NumericalError):
        state.logger.error(f"Training diverged: {error}")
        if self.out_dir:
            good = self.scene if _finite_scene(self.scene) else self.snapshot
            save_checkpoint(good, os.path.join(self.out_dir, DIVERGED_DIR))
        raise error


def _region_psnr(image: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray]) -> float:
    return metrics.psnr(image, target) if mask is None else metrics.masked_psnr(image, target, mask)


def _run_step(guard: DivergenceGuard, step):
    try:
        return step()
    except NumericalError as e:
        guard.fail(e)


def _train_static_branch(model: BranchModel, frames: list[Frame], cfg: RunConfig, extent: float,
                         log: TrainLog, guard: DivergenceGuard, result: PipelineResult,
                         out_dir: Optional[str], dataset: Dataset):
    sched = cfg.schedule
    branch = model.branch
    optimizer = _optimizer(sched.lr, _cloud_lr(sched.lr, model.cloud.params()))
    controller = DensifyController(
        cfg.densify, model.cloud.n, extent, seed=sched.seed, branch=branch.value,
        log_path=os.path.join(out_dir, DENSIFY_LOG) if out_dir else None,
    )
    order = frame_order(len(frames), sched.static_iters, [sched.seed, 0, BRANCH_INDEX[branch]])

    for it in _progress(sched.static_iters, f"static/{branch.value}"):
        step = it + 1
        frame = frames[order[it]]
        mask = frame.mask_for(branch)

        def update():
            cloud = model.cloud
            artifacts = rasterize_forward(cloud, frame.camera, cfg.render)
            loss, d_image = loss_l1_dssim(artifacts.image, frame.image, mask, cfg.loss.lambda_dssim)
            guard.check_loss(loss, STAGE.STATIC, branch.value, step)
            grads = rasterize_backward(cloud, frame.camera, cfg.render, artifacts, d_image)
            optimizer.step(cloud.params(), grads.as_dict())
            controller.observe(artifacts)
            return loss, _region_psnr(artifacts.image, frame.image, mask)

        loss, psnr_value = _run_step(guard, update)
        densified = 0
        if controller.due(step):
            n_before = model.cloud.n
            model.cloud, lineage = controller.step(step, model.cloud)
            optimizer.remap(lineage)
            densified = int(np.sum(lineage < 0))
            state.logger.debug(f"static/{branch.value} it={step}: N {n_before} -> {model.cloud.n}")
        if controller.opacity_reset_due(step):
            model.cloud = reset_opacity(model.cloud, cfg.densify.opacity_reset_value)
            optimizer.forget(("raw_opacities",))
        log.record(step, STAGE.STATIC.value, branch.value, loss, psnr_value, model.cloud.n, densified)
        if step % sched.log_interval == 0:
            state.logger.info(f"static/{branch.value} it={step} loss={loss:.5f} psnr={psnr_value:.2f} N={model.cloud.n}")
        guard.commit(step)
        if sched.eval_every and step % sched.eval_every == 0 and branch == BRANCH.FACE:
            result.evaluations.append(evaluate_scene(guard.scene, dataset, cfg.render, STAGE.STATIC.value, step))
    result.densify_events.extend(controller.events)


def run_stage_static(scene: SceneModel, dataset: Dataset, cfg: RunConfig, out_dir: Optional[str] = None,
                     result: Optional[PipelineResult] = None) -> PipelineResult:
    """
    Optimize the canonical clouds of both branches against masked static frames.

    Args:
        scene (SceneModel): Scene to train, updated in place
        dataset (Dataset): Frames; static frames are used (every frame when none is static)
        cfg (RunConfig): Render, densify, loss and schedule settings
        out_dir (str, optional): Receives densify_log.csv and, on divergence, diverged/
        result (PipelineResult, optional): Result to extend

    Returns:
        PipelineResult: Log rows, densify events and evaluations

    Raises:
        NumericalError: If the loss or a gradient becomes non-finite
    """
    result = result or PipelineResult(log=TrainLog())
    guard = DivergenceGuard(scene, out_dir, cfg.schedule.log_interval)
    frames = dataset.static_frames()
    for model in scene.branches():
        branch_frames = supervising_frames(frames, model.branch)
        if not branch_frames:
            state.logger.warning(f"No frame supervises the {model.branch.value} branch; skipping it")
            continue
        _train_static_branch(model, branch_frames, cfg, scene.extent, result.log, guard, result, out_dir, dataset)
    return result


def ensure_deformers(scene: SceneModel, dataset: Dataset, cfg: RunConfig):
    """
    Create the missing deformers of a scene for the dataset's feature dimensions.

    Raises:
        ConfigError: If the dataset carries no driving features
    """
    if dataset.features is None:
        state.logger.error("The deformation stage needs driving features")
        raise ConfigError("The deformation stage needs driving features (features.pgsf)")
    for model in scene.branches():
        if model.deformer is not None:
            continue
        fusion = cfg.mgf.face_fusion if model.branch == BRANCH.FACE else cfg.mgf.mouth_fusion
        model.deformer = BranchDeformer.create(
            model.branch, model.cloud.positions, cfg.encoder, cfg.mgf,
            dataset.features.dim_audio, dataset.features.dim_expression,
            seed=cfg.schedule.seed + 10 * BRANCH_INDEX[model.branch], fusion=fusion,
        )


def deform_cloud(model: BranchModel, features: Optional[FrameFeatures]) -> GaussianCloud:
    """The branch cloud for one frame; the canonical cloud when there is nothing to drive it."""
    if model.deformer is None or features is None:
        return model.cloud
    deltas, _ = model.deformer.forward(model.cloud, features)
    return apply_deformation(model.cloud, deltas)


def _train_deform_branch(model: BranchModel, frames: list[Frame], dataset: Dataset, cfg: RunConfig,
                         extent: float, log: TrainLog, guard: DivergenceGuard, result: PipelineResult,
                         out_dir: Optional[str]):
    sched = cfg.schedule
    branch = model.branch
    deformer = model.deformer
    rates = _deformer_lr(sched.lr, deformer)
    if sched.optimize_base_geometry:
        rates.update(_cloud_lr(sched.lr, GEOMETRY_PARAMS))
    optimizer = _optimizer(sched.lr, rates)
    densify = sched.densify_in_deform and cfg.densify.enabled
    controller = None
    if densify:
        controller = DensifyController(
            cfg.densify, model.cloud.n, extent, seed=sched.seed, branch=branch.value,
            log_path=os.path.join(out_dir, DENSIFY_LOG) if out_dir else None,
        )
    order = frame_order(len(frames), sched.deform_iters, [sched.seed, 1, BRANCH_INDEX[branch]])

    for it in _progress(sched.deform_iters, f"deform/{branch.value}"):
        step = sched.static_iters + it + 1
        frame = frames[order[it]]
        mask = frame.mask_for(branch)
        features = dataset.features_for(frame)

        def update():
            cloud = model.cloud
            deltas, cache = deformer.forward(cloud, features)
            deformed = apply_deformation(cloud, deltas)
            artifacts = rasterize_forward(deformed, frame.camera, cfg.render)
            loss, d_image = loss_l1_dssim(artifacts.image, frame.image, mask, cfg.loss.lambda_dssim)
            guard.check_loss(loss, STAGE.DEFORM, branch.value, step)
            grads = rasterize_backward(deformed, frame.camera, cfg.render, artifacts, d_image)
            d_deltas = DeformationDeltas(grads.positions, grads.raw_scales, grads.raw_rotations)
            deformer_grads, d_mu_encoder = deformer.backward(cache, d_deltas)
            params = deformer.params()
            all_grads = dict(deformer_grads)
            if sched.optimize_base_geometry:
                params.update({name: getattr(cloud, name) for name in GEOMETRY_PARAMS})
                all_grads.update({
                    "positions": grads.positions + d_mu_encoder,
                    "raw_scales": grads.raw_scales,
                    "raw_rotations": grads.raw_rotations,
                })
            optimizer.step(params, all_grads)
            if controller is not None:
                controller.observe(artifacts)
            return loss, _region_psnr(artifacts.image, frame.image, mask)

        loss, psnr_value = _run_step(guard, update)
        densified = 0
        if controller is not None and controller.due(step):
            model.cloud, lineage = controller.step(step, model.cloud)
            optimizer.remap(lineage, names=GEOMETRY_PARAMS)
            densified = int(np.sum(lineage < 0))
        log.record(step, STAGE.DEFORM.value, branch.value, loss, psnr_value, model.cloud.n, densified)
        if step % sched.log_interval == 0:
            state.logger.info(f"deform/{branch.value} it={step} loss={loss:.5f} psnr={psnr_value:.2f}")
        guard.commit(step)
    if controller is not None:
        result.densify_events.extend(controller.events)


def run_stage_deform(scene: SceneModel, dataset: Dataset, cfg: RunConfig, out_dir: Optional[str] = None,
                     result: Optional[PipelineResult] = None) -> PipelineResult:
    """
    Train the per-branch deformers on the feature-driven frames.

    Gradients flow from the rendered image through the deformed cloud into the fusion
    network and the hash tables. Base positions, scales and rotations are trained too
    when schedule.optimize_base_geometry is set. Densification continues only with
    schedule.densify_in_deform.

    Colors and opacities are never optimized here: every output row carries the
    raw_opacities and colors of the base row it descends from, byte for byte. Clones
    and split children copy their parent, pruning only removes rows, and each
    DensifyEvent.parents records the mapping.

    Raises:
        ConfigError: If the dataset has no features or no feature-driven frame
        NumericalError: If the loss or a gradient becomes non-finite
    """
    result = result or PipelineResult(log=TrainLog())
    ensure_deformers(scene, dataset, cfg)
    frames = dataset.driven_frames()
    if not frames:
        state.logger.error("The deformation stage needs frames with a feature_index")
        raise ConfigError("The deformation stage needs frames with a feature_index")
    guard = DivergenceGuard(scene, out_dir, cfg.schedule.log_interval)
    for model in scene.branches():
        branch_frames = supervising_frames(frames, model.branch)
        if not branch_frames:
            state.logger.warning(f"No driven frame supervises the {model.branch.value} branch; skipping it")
            continue
        _train_deform_branch(model, branch_frames, dataset, cfg, scene.extent, result.log, guard, result, out_dir)
    return result


def face_render_config(render_cfg: RenderConfig) -> RenderConfig:
    return render_cfg.model_copy(update={"background": BLACK})


def render_branches(scene: SceneModel, camera: Camera, features: Optional[FrameFeatures],
                    render_cfg: RenderConfig):
    """
    Render each branch for one frame.

    Returns:
        tuple: (face cloud, face artifacts, mouth cloud, mouth artifacts); the mouth
            entries are None for single-branch scenes. With a mouth the face is drawn on
            black so it can be composited.
    """
    face_cloud = deform_cloud(scene.face, features)
    if scene.mouth is None:
        return face_cloud, rasterize_forward(face_cloud, camera, render_cfg), None, None
    mouth_cloud = deform_cloud(scene.mouth, features)
    face = rasterize_forward(face_cloud, camera, face_render_config(render_cfg))
    mouth = rasterize_forward(mouth_cloud, camera, render_cfg)
    return face_cloud, face, mouth_cloud, mouth


def render_head(scene: SceneModel, camera: Camera, features: Optional[FrameFeatures] = None,
                render_cfg: Optional[RenderConfig] = None) -> np.ndarray:
    """
    Render the head image of one frame.

    Args:
        scene (SceneModel): Trained scene
        camera (Camera): View
        features (FrameFeatures, optional): Driving features; None renders the canonical clouds
        render_cfg (RenderConfig, optional): Renderer settings

    Returns:
        np.ndarray: (H, W, 3) face composited over the mouth, or the face render alone
    """
    render_cfg = render_cfg or RenderConfig()
    _, face, _, mouth = render_branches(scene, camera, features, render_cfg)
    return face.image if mouth is None else composite_head(face, mouth)


def run_stage_finetune(scene: SceneModel, dataset: Dataset, cfg: RunConfig, out_dir: Optional[str] = None,
                       result: Optional[PipelineResult] = None) -> PipelineResult:
    """
    Jointly refine the colors of both branches against full frames.

    Positions, scales, rotations, opacities, deformers and N stay fixed; the composite
    is differentiated with the face alpha held constant.

    Raises:
        ConfigError: If the perceptual hook id is unknown
        NumericalError: If the loss or a gradient becomes non-finite
    """
    result = result or PipelineResult(log=TrainLog())
    sched = cfg.schedule
    guard = DivergenceGuard(scene, out_dir, sched.log_interval)
    frames = dataset.frames
    optimizers = {model.branch: _optimizer(sched.lr, {"colors": sched.lr.colors}) for model in scene.branches()}
    face_cfg = face_render_config(cfg.render) if scene.mouth is not None else cfg.render
    order = frame_order(len(frames), sched.finetune_iters, [sched.seed, 2])

    for it in _progress(sched.finetune_iters, "finetune"):
        step = sched.static_iters + sched.deform_iters + it + 1
        frame = frames[order[it]]
        features = dataset.features_for(frame)

        def update():
            face_cloud, face, mouth_cloud, mouth = render_branches(scene, frame.camera, features, cfg.render)
            head = face.image if mouth is None else composite_head(face, mouth)
            loss, d_head = loss_finetune(head, frame.image, cfg.loss.lambda_dssim, cfg.loss.gamma, cfg.loss.hook)
            guard.check_loss(loss, STAGE.FINETUNE, "head", step)
            if mouth is None:
                d_face, d_mouth = d_head, None
            else:
                d_face, d_mouth = composite_backward(face, mouth, d_head)
            face_grads = rasterize_backward(face_cloud, frame.camera, face_cfg, face, d_face)
            optimizers[BRANCH.FACE].step({"colors": scene.face.cloud.colors}, {"colors": face_grads.colors})
            if mouth is not None:
                mouth_grads = rasterize_backward(mouth_cloud, frame.camera, cfg.render, mouth, d_mouth)
                optimizers[BRANCH.MOUTH].step({"colors": scene.mouth.cloud.colors}, {"colors": mouth_grads.colors})
            return loss, metrics.psnr(head, frame.image)

        loss, psnr_value = _run_step(guard, update)
        n = sum(model.cloud.n for model in scene.branches())
        result.log.record(step, STAGE.FINETUNE.value, "head", loss, psnr_value, n)
        if step % sched.log_interval == 0:
            state.logger.info(f"finetune it={step} loss={loss:.5f} psnr={psnr_value:.2f}")
        guard.commit(step)
    return result


STAGE_RUNNERS = {
    STAGE.STATIC: run_stage_static,
    STAGE.DEFORM: run_stage_deform,
    STAGE.FINETUNE: run_stage_finetune,
}


def stage_end_iteration(stage: STAGE, cfg: RunConfig) -> int:
    sched = cfg.schedule
    ends = {
        STAGE.STATIC: sched.static_iters,
        STAGE.DEFORM: sched.static_iters + sched.deform_iters,
        STAGE.FINETUNE: sched.static_iters + sched.deform_iters + sched.finetune_iters,
    }
    return ends[stage]


def run_pipeline(scene: SceneModel, dataset: Dataset, cfg: RunConfig, stages: list[STAGE],
                 out_dir: Optional[str] = None) -> PipelineResult:
    """
    Run the requested stages in pipeline order.

    Each stage runs inside state.pipeline_context and sets its pipeline flag when it
    completes; every stage ends with an evaluation of the whole scene.

    Args:
        scene (SceneModel): Scene to train, updated in place
        dataset (Dataset): Training frames
        cfg (RunConfig): Run configuration
        stages (list[STAGE]): Subset of stages; order is normalized, duplicates ignored
        out_dir (str, optional): Output directory for densify logs and divergence dumps

    Returns:
        PipelineResult: Train log, densify events and evaluations
    """
    result = PipelineResult(log=TrainLog())
    ordered = [stage for stage in STAGE if stage in set(stages)]
    for stage in ordered:
        with state.pipeline_context(f"stage_{stage.value}"):
            STAGE_RUNNERS[stage](scene, dataset, cfg, out_dir=out_dir, result=result)
            result.stages.append(stage.value)
            result.evaluations.append(
                evaluate_scene(scene, dataset, cfg.render, stage.value, stage_end_iteration(stage, cfg))
            )
            state.update_flag(STAGE_FLAGS[stage])
    return result


def evaluate_scene(scene: SceneModel, dataset: Dataset, render_cfg: RenderConfig, stage: str,
                   iteration: int) -> EvalRecord:
    """
    Mean PSNR / SSIM of the head render over every frame, plus the PSNR inside the
    dataset's evaluation mask (measured on the first frame) when one exists.
    """
    psnrs, ssims = [], []
    first = None
    for frame in dataset.frames:
        image = render_head(scene, frame.camera, dataset.features_for(frame), render_cfg)
        if first is None:
            first = image
        psnrs.append(metrics.psnr(image, frame.image))
        ssims.append(metrics.ssim(image, frame.image))
    region = None
    truth = dataset.truth
    if truth is not None and truth.eval_mask is not None:
        region = metrics.masked_psnr(first, dataset.frames[0].image, truth.eval_mask)
    record = EvalRecord(
        stage=stage, iteration=iteration, n=sum(model.cloud.n for model in scene.branches()),
        psnr=float(np.mean(psnrs)), ssim=float(np.mean(ssims)), region_psnr=region,
    )
    state.logger.info(
        f"Eval {stage} it={iteration}: PSNR={record.psnr:.2f} dB SSIM={record.ssim:.4f} N={record.n}"
        + (f" region PSNR={region:.2f} dB" if region is not None else "")
    )
    return record


def mouth_sync_error(scene: SceneModel, dataset: Dataset) -> float:
    """
    Mean distance between the deformed and true positions of the marked mouth
    Gaussians over every driven frame, the synthetic stand-in for landmark distance.

    Raises:
        ConfigError: If the dataset has no mouth ground truth or the scene no mouth branch
    """
    truth = dataset.truth
    if truth is None or truth.mouth is None or truth.marked is None or scene.mouth is None:
        raise ConfigError("Mouth sync error needs a mouth branch and a mouth ground truth")
    errors = []
    for frame in dataset.driven_frames():
        features = dataset.features_for(frame)
        predicted = deform_cloud(scene.mouth, features).positions
        errors.append(metrics.positional_error(predicted, truth.mouth_positions(features.audio), truth.marked))
    return float(np.mean(errors))


def benchmark_render(scene: SceneModel, cameras: list[Camera], features: Optional[list[FrameFeatures]] = None,
                     render_cfg: Optional[RenderConfig] = None, frames: int = 20, warmup: int = 2) -> BenchResult:
    """
    Time the deform + render + composite path.

    Args:
        scene (SceneModel): Scene to render
        cameras (list[Camera]): Views cycled through
        features (list[FrameFeatures], optional): Features cycled through; None renders canonical clouds
        frames (int): Timed frames
        warmup (int): Untimed frames rendered first

    Returns:
        BenchResult: Mean ms per frame and frames per second
    """
    render_cfg = render_cfg or RenderConfig()

    def render(k: int):
        feats = features[k % len(features)] if features else None
        render_head(scene, cameras[k % len(cameras)], feats, render_cfg)

    for k in range(warmup):
        render(k)
    start = time.perf_counter()
    for k in range(frames):
        render(k)
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    ms = elapsed_ms / max(frames, 1)
    fps = 1000.0 / ms if ms > 0 else float("inf")
    state.logger.info(f"Benchmark: {frames} frames, {ms:.2f} ms/frame, {fps:.1f} FPS")
    return BenchResult(frames=frames, ms_per_frame=ms, fps=fps)
