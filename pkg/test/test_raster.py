import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config import config
from errors import ContractViolation, OracleCapExceeded
from data_types.cloud import GaussianCloud
from data_types.run_config import RenderConfig
from logic.raster import rasterize_backward, rasterize_forward, rasterize_reference, write_stats_csv
from logic.synthetic import random_blobs, rig_cameras
from conftest import axis_camera, build_cloud


def test_single_saturated_splat_on_pixel_center(camera):
    cloud = build_cloud([[0.0, 0.0, 4.0]], log_scale=-1.0, opacity=0.999, rgb=[0.2, 0.6, 0.8])
    art = rasterize_forward(cloud, axis_camera(63, 63))
    assert_allclose(art.image[31, 31], 0.99 * np.array([0.2, 0.6, 0.8]), rtol=1e-12)
    assert art.per_gaussian.saturated[0] > 0


def test_front_to_back_blend_follows_recurrence():
    cam = axis_camera(63, 63)
    front = build_cloud([[0.0, 0.0, 3.0]], log_scale=-1.0, opacity=0.5, rgb=1.0)
    back = build_cloud([[0.0, 0.0, 5.0]], log_scale=-1.0, opacity=0.999, rgb=0.0)
    art = rasterize_forward(GaussianCloud.concat([back, front]), cam)
    # center pixel: a_front = 0.5, a_back = 0.99 clamped, black back and background
    assert_allclose(art.image[31, 31], [0.5, 0.5, 0.5], rtol=1e-12)
    assert art.final_transmittance[31, 31] == pytest.approx(0.5 * 0.01)


def test_offscreen_gaussian_is_invalid_with_no_coverage(camera):
    cloud = build_cloud([[0.0, 0.0, 4.0], [50.0, 0.0, 4.0]])
    art = rasterize_forward(cloud, camera)
    assert art.per_gaussian.valid.tolist() == [True, False]
    assert art.per_gaussian.coverage[1] == 0
    assert art.per_gaussian.coverage[0] > 0


def test_empty_contribution_renders_background(camera):
    cfg = RenderConfig(background=(0.2, 0.3, 0.4))
    cloud = build_cloud([[0.0, 0.0, -4.0]])
    for render in (rasterize_forward, rasterize_reference):
        art = render(cloud, camera, cfg)
        assert_allclose(art.image, np.broadcast_to([0.2, 0.3, 0.4], art.image.shape))
        assert_allclose(art.final_transmittance, 1.0)


@pytest.mark.parametrize("seed", range(6))
def test_tile_renderer_matches_reference(seed):
    rng = np.random.default_rng(seed)
    cloud = random_blobs(int(rng.integers(4, 40)), rng, radius=0.8)
    cam = rig_cameras(3, 40, 36)[seed % 3]
    cfg = RenderConfig(tile_size=int(rng.integers(3, 17)), background=(0.1, 0.2, 0.3))
    tiled = rasterize_forward(cloud, cam, cfg)
    reference = rasterize_reference(cloud, cam, cfg)
    assert np.max(np.abs(tiled.image - reference.image)) <= 1e-5
    assert_array_equal(tiled.per_gaussian.coverage, reference.per_gaussian.coverage)
    assert np.all((tiled.image >= 0.0) & (tiled.image <= 1.0))


@pytest.mark.slow
def test_tile_renderer_matches_reference_on_a_hundred_full_size_scenes():
    cameras = rig_cameras(5, 64, 64)
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        cloud = random_blobs(int(rng.integers(1, 257)), rng, radius=0.8)
        background = tuple(float(v) for v in rng.uniform(0, 1, 3))
        cfg = RenderConfig(tile_size=int(rng.choice([8, 16])), background=background)
        cam = cameras[seed % len(cameras)]
        tiled = rasterize_forward(cloud, cam, cfg)
        reference = rasterize_reference(cloud, cam, cfg)
        worst = max(worst, float(np.max(np.abs(tiled.image - reference.image))))
        assert_array_equal(tiled.per_gaussian.coverage, reference.per_gaussian.coverage, err_msg=f"seed {seed}")
    assert worst <= 1e-5


def test_reference_refuses_clouds_above_cap(blob_scene):
    cloud, cam = blob_scene
    with pytest.raises(OracleCapExceeded):
        rasterize_reference(cloud, cam, RenderConfig(reference_cap=4))


def test_coverage_is_zero_for_invalid_gaussians(blob_scene):
    cloud, cam = blob_scene
    art = rasterize_forward(cloud, cam)
    assert np.all(art.per_gaussian.coverage[~art.per_gaussian.valid] == 0)


def test_opaque_front_never_increases_coverage_behind():
    cam = axis_camera(32, 32, focal=40.0)
    back = build_cloud([[0.05, 0.0, 4.0]], log_scale=-1.0, opacity=0.8)
    coverages = []
    for opacity in (0.1, 0.5, 0.9, 0.999):
        front = build_cloud([[0.0, 0.0, 2.0], [0.0, 0.0, 2.1], [0.0, 0.0, 2.2]], log_scale=-1.2, opacity=opacity)
        art = rasterize_forward(GaussianCloud.concat([front, back]), cam)
        coverages.append(int(art.per_gaussian.coverage[3]))
    assert coverages == sorted(coverages, reverse=True)
    assert coverages[-1] < coverages[0]


def test_rendering_is_deterministic_across_thread_counts(blob_scene, monkeypatch):
    cloud, cam = blob_scene
    cfg = RenderConfig(tile_size=8)
    monkeypatch.setattr(config, "THREADS", 1)
    one = rasterize_forward(cloud, cam, cfg)
    monkeypatch.setattr(config, "THREADS", 4)
    many = rasterize_forward(cloud, cam, cfg)
    assert one.image.tobytes() == many.image.tobytes()
    assert_array_equal(one.per_gaussian.coverage, many.per_gaussian.coverage)


def test_zero_image_gradient_gives_zero_parameter_gradients(blob_scene):
    cloud, cam = blob_scene
    art = rasterize_forward(cloud, cam)
    grads = rasterize_backward(cloud, cam, RenderConfig(), art, np.zeros_like(art.image))
    for arr in grads.as_dict().values():
        assert not np.any(arr)
    assert not np.any(art.per_gaussian.ndc_grad_norm)


def test_backward_rejects_foreign_artifacts(blob_scene, make_cloud):
    cloud, cam = blob_scene
    art = rasterize_forward(cloud, cam)
    other = make_cloud([[0.0, 0.0, 0.0]])
    with pytest.raises(ContractViolation):
        rasterize_backward(other, cam, RenderConfig(), art, np.ones_like(art.image))


def _sum_image(cloud, cam, cfg):
    return rasterize_forward(cloud, cam, cfg).image.sum()


def test_position_gradient_of_image_sum_matches_finite_differences():
    cam = axis_camera(32, 32, focal=40.0)
    cfg = RenderConfig()
    cloud = build_cloud([[0.05, -0.03, 3.0]], log_scale=-1.6, opacity=0.6, rgb=[0.3, 0.5, 0.7])
    art = rasterize_forward(cloud, cam, cfg)
    grads = rasterize_backward(cloud, cam, cfg, art, np.ones_like(art.image))
    h = 1e-6
    for j in range(3):
        plus, minus = cloud.copy(), cloud.copy()
        plus.positions[0, j] += h
        minus.positions[0, j] -= h
        numeric = (_sum_image(plus, cam, cfg) - _sum_image(minus, cam, cfg)) / (2 * h)
        assert grads.positions[0, j] == pytest.approx(numeric, rel=1e-3, abs=1e-4)


def test_occluded_gaussian_gradient_is_attenuated():
    cam = axis_camera(32, 32, focal=40.0)
    cfg = RenderConfig()
    back = build_cloud([[0.0, 0.0, 4.0]], log_scale=-1.3, opacity=0.5, rgb=0.8)
    alone = rasterize_forward(back, cam, cfg)
    g_alone = rasterize_backward(back, cam, cfg, alone, np.ones_like(alone.image)).colors[0, 0, 0]

    front = build_cloud([[0.0, 0.0, 2.0]], log_scale=-1.0, opacity=0.6, rgb=0.2)
    both = GaussianCloud.concat([front, back])
    art = rasterize_forward(both, cam, cfg)
    g_behind = rasterize_backward(both, cam, cfg, art, np.ones_like(art.image)).colors[1, 0, 0]
    assert 0 < g_behind < g_alone


def test_ndc_gradient_norm_is_filled(blob_scene):
    cloud, cam = blob_scene
    art = rasterize_forward(cloud, cam)
    grads = rasterize_backward(cloud, cam, RenderConfig(), art, art.image - 0.5)
    assert_allclose(art.per_gaussian.ndc_grad_norm, np.linalg.norm(grads.ndc, axis=1))
    assert np.any(art.per_gaussian.ndc_grad_norm > 0)


def test_stats_csv_columns(blob_scene, tmp_path):
    cloud, cam = blob_scene
    path = tmp_path / "stats.csv"
    write_stats_csv(rasterize_forward(cloud, cam), str(path))
    table = pd.read_csv(path)
    assert list(table.columns) == ["index", "valid", "R", "m", "ndc_grad_norm"]
    assert len(table) == cloud.n

    write_stats_csv(rasterize_forward(cloud, cam), str(path), gradients=False)
    assert list(pd.read_csv(path).columns) == ["index", "valid", "R", "m"]


def test_coverage_counting_can_be_disabled(blob_scene):
    cloud, cam = blob_scene
    art = rasterize_forward(cloud, cam, RenderConfig(count_coverage=False))
    assert not art.per_gaussian.coverage.any()
