"""
Finite-difference verification of every hand-written backward pass.

Each suite builds small random instances, takes a random linear functional of the
operation's output as the scalar loss, and compares the analytic gradient of a few
random coordinates per parameter class against central differences:

    numeric = (L(x + h) - L(x - h)) / 2h,   rel = |a - n| / max(|a|, |n|, GRAD_FLOOR)

The rasterizer and the hash encoder are only piecewise smooth (pixel inclusion tests,
alpha and color clamps, depth order, grid cells). A coordinate whose discrete
structure differs at x - 10h or x + 10h from the one at x is excluded and counted.
"""

from typing import Callable, Optional

import numpy as np

from global_state import state
from errors import ConfigError
from data_types.check_types import GradcheckLine, GradcheckReport
from data_types.cloud import GaussianCloud, PARAM_NAMES
from data_types.enums import BRANCH
from data_types.features import FrameFeatures
from data_types.run_config import RunConfig, RenderConfig, EncoderConfig, MgfConfig
from logic import gsmath
from logic.deform import BranchDeformer, DeformationDeltas
from logic.hash_encoder import TriPlaneHashEncoder
from logic.losses import loss_l1_dssim
from logic.mgf import MgfParams
from logic.raster import rasterize_forward, rasterize_backward

STEP = 1e-4
TOLERANCE = 1e-3
EXCLUSION_FACTOR = 10.0
GRAD_FLOOR = 1e-4
IMAGE_SIZE = 16
LOSS_IMAGE_SIZE = 8
SUITES = ("raster", "encoder", "mgf.mouth", "mgf.face", "deform", "losses")

CHECK_ENCODER = EncoderConfig(levels=3, features=2, log2_table_size=8, base_resolution=4, max_resolution=16,
                              init_range=0.5)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_FLOOR)


def central_difference(fn: Callable[[float], float], step: float = STEP) -> float:
    """fn(delta) evaluates the loss with one coordinate moved by delta."""
    return (fn(step) - fn(-step)) / (2.0 * step)


class _Suite:
    """Lines of one suite, keyed by parameter class, with optional sign-flip fault."""

    def __init__(self, name: str, tolerance: float, fault: bool):
        self.name = name
        self.tolerance = tolerance
        self.fault = fault
        self.lines: dict[str, GradcheckLine] = {}

    def line(self, param: str) -> GradcheckLine:
        if param not in self.lines:
            self.lines[param] = GradcheckLine(self.name, param, tolerance=self.tolerance)
        return self.lines[param]

    def compare(self, param: str, analytic: float, numeric: float):
        if self.fault:
            analytic = -analytic
        self.line(param).add(relative_error(analytic, numeric))

    def exclude(self, param: str):
        self.line(param).excluded += 1


def _pick(rng: np.random.Generator, shape: tuple, count: int) -> list[tuple]:
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def random_check_cloud(rng: np.random.Generator) -> GaussianCloud:
    """A few mid-sized, partly transparent Gaussians near the origin."""
    n = int(rng.integers(2, 6))
    sh_bands = 4 if rng.random() < 0.5 else 1
    colors = np.zeros((n, 3, sh_bands))
    colors[:, :, 0] = gsmath.rgb_to_sh0(rng.uniform(0.25, 0.75, size=(n, 3)))
    if sh_bands == 4:
        colors[:, :, 1:] = rng.normal(scale=0.05, size=(n, 3, 3))
    return GaussianCloud(
        positions=rng.uniform(-0.4, 0.4, size=(n, 3)),
        raw_scales=np.log(rng.uniform(0.15, 0.35, size=(n, 3))),
        raw_rotations=rng.normal(size=(n, 4)),
        raw_opacities=gsmath.logit(rng.uniform(0.3, 0.8, size=n)),
        colors=colors,
    )


def random_check_camera(rng: np.random.Generator, size: int = IMAGE_SIZE):
    theta = rng.uniform(-0.5, 0.5)
    eye = (3.0 * np.sin(theta), rng.uniform(-0.3, 0.3), -3.0 * np.cos(theta))
    return gsmath.look_at(eye, (0.0, 0.0, 0.0), (0.0, -1.0, 0.0), size, size, fx=1.25 * size, fy=1.25 * size)


def _raster_signature(artifacts) -> tuple:
    stats = artifacts.per_gaussian
    return (
        stats.coverage.tobytes(), stats.saturated.tobytes(), stats.valid.tobytes(), stats.radius.tobytes(),
        artifacts.color_clamped.tobytes(), artifacts.order.tobytes(),
    )


def check_raster(suite: _Suite, rng: np.random.Generator, render_cfg: RenderConfig, coords: int):
    cloud = random_check_cloud(rng)
    camera = random_check_camera(rng)
    weights = rng.normal(size=(camera.height, camera.width, 3))
    artifacts = rasterize_forward(cloud, camera, render_cfg)
    grads = rasterize_backward(cloud, camera, render_cfg, artifacts, weights).as_dict()
    base = _raster_signature(artifacts)

    def moved(name: str, index: tuple, delta: float):
        probe = cloud.copy()
        getattr(probe, name)[index] += delta
        return rasterize_forward(probe, camera, render_cfg)

    far = EXCLUSION_FACTOR * STEP
    for name in PARAM_NAMES:
        for index in _pick(rng, getattr(cloud, name).shape, coords):
            renders = {d: moved(name, index, d) for d in (-far, -STEP, STEP, far)}
            if any(_raster_signature(r) != base for r in renders.values()):
                suite.exclude(name)
                continue
            numeric = central_difference(lambda d: float(np.sum(renders[d].image * weights)))
            suite.compare(name, float(grads[name][index]), numeric)


def check_encoder(suite: _Suite, rng: np.random.Generator, coords: int):
    encoder = TriPlaneHashEncoder(CHECK_ENCODER, -np.ones(3), np.ones(3), seed=int(rng.integers(1 << 31)))
    positions = rng.uniform(-0.9, 0.9, size=(int(rng.integers(2, 6)), 3))
    weights = rng.normal(size=(positions.shape[0], encoder.output_dim))
    _, cache = encoder.encode(positions)
    d_tables, d_positions = encoder.backward(cache, weights)

    def loss(pos=positions) -> float:
        return float(np.sum(encoder.encode(pos)[0] * weights))

    touched = np.stack(np.nonzero(d_tables), axis=1)
    for row in touched[rng.choice(len(touched), size=min(coords, len(touched)), replace=False)]:
        index = tuple(int(i) for i in row)
        original = encoder.tables[index]

        def table_loss(delta: float) -> float:
            encoder.tables[index] = original + delta
            value = loss()
            encoder.tables[index] = original
            return value

        suite.compare("tables", float(d_tables[index]), central_difference(table_loss))

    for index in _pick(rng, positions.shape, coords):
        def shifted(delta: float) -> np.ndarray:
            pos = positions.copy()
            pos[index] += delta
            return pos

        far = EXCLUSION_FACTOR * STEP
        if any(not np.array_equal(encoder.encode(shifted(d))[1].indices, cache.indices) for d in (-far, far)):
            suite.exclude("positions")
            continue
        suite.compare("positions", float(d_positions[index]), central_difference(lambda d: loss(shifted(d))))


def _param_class(name: str) -> str:
    return name.split(".", 1)[0]


def check_mgf(suite: _Suite, rng: np.random.Generator, branch: BRANCH, mgf_cfg: MgfConfig, coords: int):
    cfg = mgf_cfg.model_copy(update={"projected_dim": 4, "hidden_width": 8, "head_init_scale": 0.5})
    dim_s, dim_a, dim_e = 12, 2, 2 if branch == BRANCH.FACE else 0
    net = MgfParams(branch, cfg, dim_s, dim_a, dim_e, seed=int(rng.integers(1 << 31)))
    f_s = rng.normal(size=(int(rng.integers(2, 6)), dim_s))
    f_a = rng.normal(size=dim_a)
    f_e = rng.normal(size=dim_e) if dim_e else None
    out, cache = net.forward(f_s, f_a, f_e)
    weights = rng.normal(size=out.shape)
    grads, d_f_s = net.backward(cache, weights)

    def loss(spatial=f_s) -> float:
        return float(np.sum(net.forward(spatial, f_a, f_e)[0] * weights))

    for name, array in net.params.items():
        for index in _pick(rng, array.shape, coords):
            original = array[index]

            def param_loss(delta: float) -> float:
                array[index] = original + delta
                value = loss()
                array[index] = original
                return value

            suite.compare(_param_class(name), float(grads[name][index]), central_difference(param_loss))

    for index in _pick(rng, f_s.shape, coords):
        def spatial_loss(delta: float) -> float:
            shifted = f_s.copy()
            shifted[index] += delta
            return loss(shifted)

        suite.compare("f_s", float(d_f_s[index]), central_difference(spatial_loss))


def check_deform(suite: _Suite, rng: np.random.Generator, mgf_cfg: MgfConfig, coords: int):
    """dL/d mu_base through the encoder path of both branch deformers."""
    cfg = mgf_cfg.model_copy(update={"projected_dim": 4, "hidden_width": 8, "head_init_scale": 0.5})
    cloud = random_check_cloud(rng)
    frame = FrameFeatures(audio=rng.normal(size=2), expression=rng.normal(size=2))
    for branch in BRANCH:
        deformer = BranchDeformer.create(branch, cloud.positions, CHECK_ENCODER, cfg, 2, 2,
                                         seed=int(rng.integers(1 << 31)))
        deltas, cache = deformer.forward(cloud, frame)
        w_mu, w_s, w_q = (rng.normal(size=a.shape) for a in (deltas.positions, deltas.raw_scales, deltas.raw_rotations))
        _, d_mu = deformer.backward(cache, DeformationDeltas(w_mu, w_s, w_q))

        def shifted(index: tuple, delta: float) -> GaussianCloud:
            probe = cloud.copy()
            probe.positions[index] += delta
            return probe

        def loss(probe: GaussianCloud) -> float:
            out, _ = deformer.forward(probe, frame)
            return float(np.sum(out.positions * w_mu) + np.sum(out.raw_scales * w_s) + np.sum(out.raw_rotations * w_q))

        param = f"mu_base.{branch.value}"
        for index in _pick(rng, cloud.positions.shape, coords):
            far = EXCLUSION_FACTOR * STEP
            if any(not np.array_equal(deformer.forward(shifted(index, d), frame)[1].encoding.indices,
                                      cache.encoding.indices) for d in (-far, far)):
                suite.exclude(param)
                continue
            suite.compare(param, float(d_mu[index]), central_difference(lambda d: loss(shifted(index, d))))


def check_losses(suite: _Suite, rng: np.random.Generator, lam: float, coords: int):
    shape = (LOSS_IMAGE_SIZE, LOSS_IMAGE_SIZE, 3)
    pred = rng.uniform(0.0, 1.0, size=shape)
    target = rng.uniform(0.0, 1.0, size=shape)
    mask = (rng.random(shape[:2]) < 0.6).astype(np.float64)
    mask[0, 0] = 1.0
    for param, m in (("l1_dssim", None), ("masked", mask)):
        _, grad = loss_l1_dssim(pred, target, m, lam)
        for index in _pick(rng, shape, coords):
            inside = m is None or m[index[:2]] > 0
            if inside and abs(pred[index] - target[index]) < EXCLUSION_FACTOR * STEP:
                suite.exclude(param)
                continue

            def moved(delta: float) -> float:
                probe = pred.copy()
                probe[index] += delta
                return loss_l1_dssim(probe, target, m, lam)[0]

            suite.compare(param, float(grad[index]), central_difference(moved))


def run_gradcheck(cfg: Optional[RunConfig] = None, instances: int = 20, coords: int = 4,
                  suites: tuple = SUITES, fault: Optional[str] = None,
                  tolerance: float = TOLERANCE) -> GradcheckReport:
    """
    Run the finite-difference suites.

    Args:
        cfg (RunConfig, optional): Render, fusion and loss settings and the seed
        instances (int): Random instances per suite
        coords (int): Coordinates sampled per parameter class and instance
        suites (tuple): Subset of SUITES
        fault (str, optional): Name of a suite whose analytic gradients are negated
            before comparison, to prove the harness catches a sign error
        tolerance (float): Largest accepted relative error

    Returns:
        GradcheckReport: One line per parameter class
    """
    cfg = cfg or RunConfig()
    report = GradcheckReport()
    unknown = [name for name in suites if name not in SUITES]
    if unknown:
        state.logger.error(f"Unknown gradcheck suites {unknown}")
        raise ConfigError(f"Unknown gradcheck suites {unknown}. Expected some of: {list(SUITES)}")
    render_cfg = cfg.render.model_copy(update={"count_coverage": True})
    for name in suites:
        suite = _Suite(name, tolerance, fault == name)
        rng = np.random.default_rng([cfg.schedule.seed, SUITES.index(name)])
        for _ in range(instances):
            if name == "raster":
                check_raster(suite, rng, render_cfg, coords)
            elif name == "encoder":
                check_encoder(suite, rng, coords)
            elif name == "mgf.mouth":
                check_mgf(suite, rng, BRANCH.MOUTH, cfg.mgf, coords)
            elif name == "mgf.face":
                check_mgf(suite, rng, BRANCH.FACE, cfg.mgf, coords)
            elif name == "deform":
                check_deform(suite, rng, cfg.mgf, coords)
            else:
                check_losses(suite, rng, cfg.loss.lambda_dssim, coords)
        for line in suite.lines.values():
            (state.logger.info if line.passed else state.logger.error)(f"gradcheck {line}")
        report.lines.extend(suite.lines.values())
    return report
