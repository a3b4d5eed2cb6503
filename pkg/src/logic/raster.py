"""
Tile-based rasterizer.

Front-to-back alpha compositing of projected Gaussians with per-Gaussian pixel
coverage counting, an analytic backward pass and a brute-force reference renderer.

Every renderer applies the same contribution rule: Gaussian g contributes to pixel p
iff |p - center_px(g)| < R(g), the evaluated alpha a = min(o * exp(-d^T Q d / 2), 0.99)
is at least alpha_min, and the transmittance arriving at g is at least
transmittance_min. Coverage m(g) counts the contributing pixels of a valid Gaussian.
Because contributions never reach outside the radius disc, binning by disc/tile
intersection loses nothing and tile and reference renders agree to round-off.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from global_state import state
from config import config
from errors import ContractViolation, OracleCapExceeded
from data_types.camera import Camera
from data_types.cloud import GaussianCloud
from data_types.run_config import RenderConfig
from data_types.render_types import GaussianRenderStats, ParamGrads, RenderArtifacts, TileBin
from logic import gsmath

VALID_DEPTH_MIN = 0.2


@dataclass
class _Prepared:
    """Per-view quantities shared by forward and backward."""
    projection: object
    opacities: np.ndarray
    rgb: np.ndarray
    clamped: np.ndarray
    dirs: np.ndarray
    dist: np.ndarray
    valid: np.ndarray
    order: np.ndarray
    rendered: np.ndarray


def _prepare(cloud: GaussianCloud, camera: Camera, cfg: RenderConfig) -> _Prepared:
    proj = gsmath.project_cloud(cloud, camera, cfg.lowpass)
    opacities = gsmath.sigmoid(cloud.raw_opacities)
    dirs, dist = gsmath.view_directions(cloud.positions, camera)
    rgb, clamped = gsmath.eval_sh(cloud.colors, dirs)

    radius = proj.radius
    px, py = proj.center_px[:, 0], proj.center_px[:, 1]
    rendered = ~proj.culled & (radius > 0)
    valid = (
        rendered
        & (proj.depth > VALID_DEPTH_MIN)
        & (px > -radius - 0.5) & (px < radius + camera.width - 0.5)
        & (py > -radius - 0.5) & (py < radius + camera.height - 0.5)
    )
    # stable sort: depth ties keep index order
    order = np.argsort(proj.depth, kind="stable")
    order = order[rendered[order]]
    return _Prepared(proj, opacities, rgb, clamped, dirs, dist, valid, order, rendered)


def _empty_stats(prep: _Prepared, n: int) -> GaussianRenderStats:
    return GaussianRenderStats(
        radius=prep.projection.radius.copy(),
        coverage=np.zeros(n, dtype=np.int64),
        valid=prep.valid.copy(),
        ndc_grad_norm=np.zeros(n),
        ndc_grad=np.zeros((n, 2)),
        saturated=np.zeros(n, dtype=np.int64),
        depth=prep.projection.depth.copy(),
        center_ndc=prep.projection.center_ndc.copy(),
    )


def bin_tiles(prep: _Prepared, width: int, height: int, tile_size: int) -> list[TileBin]:
    """
    Assign depth-ordered Gaussians to every tile their radius disc reaches.

    A disc reaches a tile when its center is closer than R to the rectangle spanned
    by the tile's pixel centers.
    """
    centers = prep.projection.center_px[prep.order]
    radii = prep.projection.radius[prep.order]
    tiles = []
    for y0 in range(0, height, tile_size):
        y1 = min(y0 + tile_size, height)
        for x0 in range(0, width, tile_size):
            x1 = min(x0 + tile_size, width)
            qx = np.clip(centers[:, 0], x0, x1 - 1)
            qy = np.clip(centers[:, 1], y0, y1 - 1)
            hit = (centers[:, 0] - qx) ** 2 + (centers[:, 1] - qy) ** 2 < radii ** 2
            tiles.append(TileBin(x0, y0, x1, y1, prep.order[hit]))
    return tiles


def _composite_block(tile: TileBin, prep: _Prepared, cfg: RenderConfig) -> dict:
    """
    Evaluate the contribution matrices of one block of pixels.

    Returns:
        dict: pixel coordinates, offsets, raw and clamped alpha, include mask,
            transmittance before each Gaussian and the final transmittance
    """
    ys, xs = np.mgrid[tile.y0:tile.y1, tile.x0:tile.x1]
    pix_x = xs.reshape(-1).astype(np.float64)
    pix_y = ys.reshape(-1).astype(np.float64)
    g = tile.gaussians
    proj = prep.projection

    dx = pix_x[:, None] - proj.center_px[g, 0][None, :]
    dy = pix_y[:, None] - proj.center_px[g, 1][None, :]
    q = proj.conic[g]
    inside = dx * dx + dy * dy < proj.radius[g][None, :] ** 2
    power = -0.5 * (q[:, 0, 0] * dx * dx + (q[:, 0, 1] + q[:, 1, 0]) * dx * dy + q[:, 1, 1] * dy * dy)
    alpha_raw = prep.opacities[g][None, :] * np.exp(np.minimum(power, 0.0))
    saturated = alpha_raw >= cfg.alpha_max
    alpha = np.minimum(alpha_raw, cfg.alpha_max)
    candidate = inside & (power <= 0.0) & (alpha >= cfg.alpha_min)

    a_eff = np.where(candidate, alpha, 0.0)
    t_after = np.cumprod(1.0 - a_eff, axis=1)
    t_before = np.ones_like(a_eff)
    t_before[:, 1:] = t_after[:, :-1]
    include = candidate & (t_before >= cfg.transmittance_min)
    a_final = np.where(include, alpha, 0.0)
    t_final = np.prod(1.0 - a_final, axis=1)
    return {
        "dx": dx, "dy": dy, "alpha_raw": alpha_raw, "alpha": a_final,
        "include": include, "saturated": saturated & include,
        "t_before": t_before, "t_final": t_final,
    }


def _forward_tile(tile: TileBin, prep: _Prepared, cfg: RenderConfig, background: np.ndarray):
    block = _composite_block(tile, prep, cfg)
    weights = block["alpha"] * block["t_before"]
    color = weights @ prep.rgb[tile.gaussians] + block["t_final"][:, None] * background[None, :]
    return color, block["t_final"], block["include"].sum(axis=0), block["saturated"].sum(axis=0)


def _map_tiles(fn, tiles: list[TileBin]) -> list:
    """Run fn over tiles on the worker pool, results in tile order."""
    workers = max(1, int(config.THREADS))
    if workers == 1 or len(tiles) < 2:
        return [fn(tile) for tile in tiles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tiles))


def rasterize_forward(cloud: GaussianCloud, camera: Camera, cfg: RenderConfig = None) -> RenderArtifacts:
    """
    Render a cloud with the tile rasterizer.

    Args:
        cloud (GaussianCloud): Scene
        camera (Camera): View
        cfg (RenderConfig, optional): Thresholds, tile size and background

    Returns:
        RenderArtifacts: Image, final transmittance and per-Gaussian bookkeeping
            (radius, coverage m, validity, saturated pixel counts)
    """
    cfg = cfg or RenderConfig()
    prep = _prepare(cloud, camera, cfg)
    background = np.asarray(cfg.background, dtype=np.float64)
    height, width = camera.height, camera.width
    tiles = bin_tiles(prep, width, height, cfg.tile_size)

    image = np.empty((height, width, 3))
    transmittance = np.empty((height, width))
    stats = _empty_stats(prep, cloud.n)
    results = _map_tiles(lambda tile: _forward_tile(tile, prep, cfg, background), tiles)
    for tile, (color, t_final, covered, saturated) in zip(tiles, results):
        h, w = tile.y1 - tile.y0, tile.x1 - tile.x0
        image[tile.y0:tile.y1, tile.x0:tile.x1] = color.reshape(h, w, 3)
        transmittance[tile.y0:tile.y1, tile.x0:tile.x1] = t_final.reshape(h, w)
        np.add.at(stats.coverage, tile.gaussians, covered)
        np.add.at(stats.saturated, tile.gaussians, saturated)

    _finish_stats(stats, cfg)
    return RenderArtifacts(
        image=image,
        final_transmittance=transmittance,
        per_gaussian=stats,
        projection=prep.projection,
        colors=prep.rgb,
        color_clamped=prep.clamped,
        view_dirs=prep.dirs,
        order=prep.order,
        tiles=tiles,
        background=background,
        n_gaussians=cloud.n,
    )


def _finish_stats(stats: GaussianRenderStats, cfg: RenderConfig):
    stats.coverage[~stats.valid] = 0
    if not cfg.count_coverage:
        stats.coverage[:] = 0


def rasterize_reference(cloud: GaussianCloud, camera: Camera, cfg: RenderConfig = None) -> RenderArtifacts:
    """
    Brute-force renderer used as an oracle for the tile rasterizer.

    Walks every image row through every rendered Gaussian in depth order and applies
    the compositing recurrence directly, with no tiling.

    Raises:
        OracleCapExceeded: If the cloud is larger than cfg.reference_cap
    """
    cfg = cfg or RenderConfig()
    if cloud.n > cfg.reference_cap:
        state.logger.error(f"Reference renderer refuses {cloud.n} Gaussians (cap {cfg.reference_cap})")
        raise OracleCapExceeded(f"Reference renderer refuses {cloud.n} Gaussians (cap {cfg.reference_cap})")
    prep = _prepare(cloud, camera, cfg)
    background = np.asarray(cfg.background, dtype=np.float64)
    height, width = camera.height, camera.width
    proj = prep.projection
    stats = _empty_stats(prep, cloud.n)

    image = np.empty((height, width, 3))
    transmittance = np.empty((height, width))
    xs = np.arange(width, dtype=np.float64)
    for y in range(height):
        t_row = np.ones(width)
        c_row = np.zeros((width, 3))
        for g in prep.order:
            dx = xs - proj.center_px[g, 0]
            dy = float(y) - proj.center_px[g, 1]
            q = proj.conic[g]
            power = -0.5 * (q[0, 0] * dx * dx + (q[0, 1] + q[1, 0]) * dx * dy + q[1, 1] * dy * dy)
            alpha_raw = prep.opacities[g] * np.exp(np.minimum(power, 0.0))
            alpha = np.minimum(alpha_raw, cfg.alpha_max)
            hit = ((dx * dx + dy * dy < proj.radius[g] ** 2) & (power <= 0.0)
                   & (alpha >= cfg.alpha_min) & (t_row >= cfg.transmittance_min))
            if not hit.any():
                continue
            c_row[hit] += (alpha[hit] * t_row[hit])[:, None] * prep.rgb[g][None, :]
            t_row[hit] *= 1.0 - alpha[hit]
            stats.coverage[g] += int(hit.sum())
            stats.saturated[g] += int((hit & (alpha_raw >= cfg.alpha_max)).sum())
        image[y] = c_row + t_row[:, None] * background[None, :]
        transmittance[y] = t_row

    _finish_stats(stats, cfg)
    return RenderArtifacts(
        image=image,
        final_transmittance=transmittance,
        per_gaussian=stats,
        projection=proj,
        colors=prep.rgb,
        color_clamped=prep.clamped,
        view_dirs=prep.dirs,
        order=prep.order,
        tiles=[TileBin(0, 0, width, height, prep.order)],
        background=background,
        n_gaussians=cloud.n,
    )


def _backward_tile(tile: TileBin, prep: _Prepared, cfg: RenderConfig, background: np.ndarray,
                   d_image: np.ndarray):
    g = tile.gaussians
    if g.size == 0:
        return None
    block = _composite_block(tile, prep, cfg)
    d_pix = d_image[tile.y0:tile.y1, tile.x0:tile.x1].reshape(-1, 3)
    alpha, t_before, include = block["alpha"], block["t_before"], block["include"]
    rgb = prep.rgb[g]

    weights = alpha * t_before
    d_rgb = weights.T @ d_pix

    # dL/da = T c.dC - (contribution behind g, background included) / (1 - a)
    e = d_pix @ rgb.T
    contrib = weights * e
    behind = contrib.sum(axis=1, keepdims=True) + (block["t_final"] * (d_pix @ background))[:, None] - np.cumsum(contrib, axis=1)
    d_alpha = np.where(include, t_before * e - behind / (1.0 - alpha), 0.0)
    d_alpha = np.where(block["saturated"], 0.0, d_alpha)

    alpha_raw = block["alpha_raw"]
    opac = prep.opacities[g]
    gauss = alpha_raw / opac[None, :]
    d_opac = np.sum(d_alpha * gauss, axis=0)
    d_power = d_alpha * alpha_raw

    dx, dy = block["dx"], block["dy"]
    q = prep.projection.conic[g]
    q_sym = 0.5 * (q[:, 0, 1] + q[:, 1, 0])
    d_conic = np.empty((g.size, 2, 2))
    d_conic[:, 0, 0] = -0.5 * np.sum(d_power * dx * dx, axis=0)
    d_conic[:, 0, 1] = -0.5 * np.sum(d_power * dx * dy, axis=0)
    d_conic[:, 1, 0] = d_conic[:, 0, 1]
    d_conic[:, 1, 1] = -0.5 * np.sum(d_power * dy * dy, axis=0)
    d_center = np.empty((g.size, 2))
    d_center[:, 0] = np.sum(d_power * (q[:, 0, 0] * dx + q_sym * dy), axis=0)
    d_center[:, 1] = np.sum(d_power * (q_sym * dx + q[:, 1, 1] * dy), axis=0)
    return d_rgb, d_opac, d_conic, d_center


def rasterize_backward(cloud: GaussianCloud, camera: Camera, cfg: RenderConfig,
                       artifacts: RenderArtifacts, dL_dimage: np.ndarray) -> ParamGrads:
    """
    Gradients of a scalar loss with respect to every cloud parameter.

    Also fills artifacts.per_gaussian.ndc_grad and ndc_grad_norm, the screen-space
    gradient magnitude used by densification.

    Args:
        cloud (GaussianCloud): Scene passed to the forward render
        camera (Camera): View passed to the forward render
        cfg (RenderConfig): Configuration passed to the forward render
        artifacts (RenderArtifacts): Output of rasterize_forward / rasterize_reference
        dL_dimage (np.ndarray): (H, W, 3) gradient of the loss w.r.t. the image

    Returns:
        ParamGrads: Gradients for positions, raw_scales, raw_rotations, raw_opacities, colors

    Raises:
        ContractViolation: If the artifacts do not belong to this cloud and camera
    """
    cfg = cfg or RenderConfig()
    dL_dimage = np.asarray(dL_dimage, dtype=np.float64)
    if artifacts.n_gaussians != cloud.n:
        state.logger.error(f"Artifacts cover {artifacts.n_gaussians} Gaussians, cloud has {cloud.n}")
        raise ContractViolation(f"Artifacts cover {artifacts.n_gaussians} Gaussians, cloud has {cloud.n}")
    if artifacts.image.shape != (camera.height, camera.width, 3) or dL_dimage.shape != artifacts.image.shape:
        state.logger.error(f"Image gradient shape {dL_dimage.shape} does not match render {artifacts.image.shape}")
        raise ContractViolation(f"Image gradient shape {dL_dimage.shape} does not match render {artifacts.image.shape}")

    prep = _prepare(cloud, camera, cfg)
    n = cloud.n
    d_rgb = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_conic = np.zeros((n, 2, 2))
    d_center = np.zeros((n, 2))
    if np.any(dL_dimage):
        results = _map_tiles(
            lambda tile: _backward_tile(tile, prep, cfg, artifacts.background, dL_dimage), artifacts.tiles
        )
        for tile, result in zip(artifacts.tiles, results):
            if result is None:
                continue
            np.add.at(d_rgb, tile.gaussians, result[0])
            np.add.at(d_opac, tile.gaussians, result[1])
            np.add.at(d_conic, tile.gaussians, result[2])
            np.add.at(d_center, tile.gaussians, result[3])

    proj = prep.projection
    d_cov2d = -proj.conic @ d_conic @ proj.conic
    d_positions, d_raw_scales, d_raw_rotations = gsmath.project_backward(cloud, camera, proj, d_center, d_cov2d)
    d_colors, d_dirs = gsmath.eval_sh_backward(cloud.colors, prep.dirs, prep.clamped, d_rgb)
    if cloud.sh_degree > 0:
        d_positions = d_positions + gsmath.direction_backward(prep.dirs, prep.dist, d_dirs)
    d_raw_opacities = d_opac * prep.opacities * (1.0 - prep.opacities)

    d_ndc = d_center * np.array([camera.width / 2.0, camera.height / 2.0])
    artifacts.per_gaussian.ndc_grad = d_ndc
    artifacts.per_gaussian.ndc_grad_norm = np.sqrt(np.sum(d_ndc ** 2, axis=1))
    return ParamGrads(
        positions=d_positions,
        raw_scales=d_raw_scales,
        raw_rotations=d_raw_rotations,
        raw_opacities=d_raw_opacities,
        colors=d_colors,
        ndc=d_ndc,
    )


def stats_frame(artifacts: RenderArtifacts) -> pd.DataFrame:
    """Per-Gaussian render statistics as a table."""
    stats = artifacts.per_gaussian
    return pd.DataFrame({
        "index": np.arange(stats.n),
        "valid": stats.valid.astype(int),
        "R": stats.radius.astype(int),
        "m": stats.coverage,
        "ndc_grad_norm": stats.ndc_grad_norm,
    })


def write_stats_csv(artifacts: RenderArtifacts, path: str, gradients: bool = True):
    """
    Dump (index, valid, R, m, ndc_grad_norm) for every Gaussian. Pass gradients=False
    for a forward-only render; ndc_grad_norm is then left out rather than written as zeros.
    """
    table = stats_frame(artifacts)
    if not gradients:
        table = table.drop(columns=["ndc_grad_norm"])
    table.to_csv(path, index=False)
    state.logger.debug(f"Wrote render stats for {artifacts.n_gaussians} Gaussians to {path}")
