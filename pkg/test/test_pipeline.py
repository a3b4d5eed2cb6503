import numpy as np
import pytest
from numpy.testing import assert_array_equal

from errors import ConfigError
from data_types.enums import DENSIFY_POLICY, STAGE, SYNTHETIC_RIG
from data_types.run_config import DataConfig, DensifyConfig, RunConfig, TrainSchedule
from logic.pipeline import (
    ensure_deformers, frame_order, init_scene, mouth_sync_error, render_head, run_pipeline, run_stage_deform,
    run_stage_finetune, run_stage_static,
)
from logic.raster import rasterize_forward
from logic.synthetic import make_rig, MOUTH_AMPLITUDE, scene_from_truth


def run_config(static=0, deform=0, finetune=0, **schedule) -> RunConfig:
    return RunConfig(
        data=DataConfig(n_views=2, n_frames=3, width=16, height=16, init_points=6),
        densify=DensifyConfig(start_iter=2, interval=2),
        schedule=TrainSchedule(static_iters=static, deform_iters=deform, finetune_iters=finetune,
                               log_interval=1, **schedule),
    )


@pytest.fixture
def talking():
    return make_rig(SYNTHETIC_RIG.TALKING, DataConfig(n_frames=3, width=16, height=16))


def test_frame_order_visits_every_frame_once_per_epoch():
    order = frame_order(4, 10, seed=1)
    assert len(order) == 10
    assert sorted(order[:4]) == [0, 1, 2, 3]
    assert sorted(order[4:8]) == [0, 1, 2, 3]
    assert_array_equal(order, frame_order(4, 10, seed=1))


def test_static_stage_is_deterministic():
    cfg = run_config(static=6)
    dataset = make_rig(SYNTHETIC_RIG.BLOBS, cfg.data)
    checksums = []
    for _ in range(2):
        scene = init_scene(dataset, cfg)
        result = run_stage_static(scene, dataset, cfg)
        checksums.append(scene.face.cloud.checksum())
        assert len(result.log.rows) == 6
    assert checksums[0] == checksums[1]


def test_deform_stage_keeps_appearance_and_size(talking):
    cfg = run_config(deform=2, densify_in_deform=False, optimize_base_geometry=False)
    scene = scene_from_truth(talking.truth)
    before = {model.branch: model.cloud.copy() for model in scene.branches()}
    run_stage_deform(scene, talking, cfg)
    for model in scene.branches():
        assert model.deformer is not None
        assert model.cloud.checksum() == before[model.branch].checksum()


def test_deform_stage_with_base_geometry_leaves_colors_and_opacity(talking):
    cfg = run_config(deform=2, densify_in_deform=False)
    scene = scene_from_truth(talking.truth)
    before = scene.face.cloud.copy()
    run_stage_deform(scene, talking, cfg)
    assert_array_equal(scene.face.cloud.colors, before.colors)
    assert_array_equal(scene.face.cloud.raw_opacities, before.raw_opacities)
    assert scene.face.cloud.n == before.n


def test_deform_densification_keeps_each_row_appearance_of_its_ancestor(talking):
    cfg = run_config(deform=4).model_copy(update={"densify": DensifyConfig(start_iter=1, interval=1, tau_pos=1e-8)})
    assert cfg.schedule.densify_in_deform and cfg.schedule.optimize_base_geometry
    scene = scene_from_truth(talking.truth)
    before = {model.branch: model.cloud.copy() for model in scene.branches()}
    result = run_stage_deform(scene, talking, cfg)

    assert sum(e.n_clone + e.n_split for e in result.densify_events) > 0
    for model in scene.branches():
        base = before[model.branch]
        ancestor = np.arange(base.n)
        for event in (e for e in result.densify_events if e.branch == model.branch.value):
            ancestor = ancestor[event.parents]
        assert ancestor.size == model.cloud.n
        assert model.cloud.raw_opacities.tobytes() == base.raw_opacities[ancestor].tobytes()
        assert model.cloud.colors.tobytes() == base.colors[ancestor].tobytes()


def test_finetune_only_moves_colors(talking):
    cfg = run_config(finetune=2)
    scene = scene_from_truth(talking.truth)
    ensure_deformers(scene, talking, cfg)
    face = scene.face.cloud.copy()
    run_stage_finetune(scene, talking, cfg)
    geometry = ("positions", "raw_scales", "raw_rotations", "raw_opacities")
    assert scene.face.cloud.checksum(geometry) == face.checksum(geometry)
    assert not np.array_equal(scene.face.cloud.colors, face.colors)


def test_deform_stage_needs_features():
    cfg = run_config(deform=1)
    dataset = make_rig(SYNTHETIC_RIG.BLOBS, cfg.data)
    with pytest.raises(ConfigError):
        run_stage_deform(init_scene(dataset, cfg), dataset, cfg)


def test_pipeline_normalizes_stage_order(talking):
    cfg = run_config()
    scene = scene_from_truth(talking.truth)
    result = run_pipeline(scene, talking, cfg, [STAGE.FINETUNE, STAGE.STATIC, STAGE.FINETUNE])
    assert result.stages == ["static", "finetune"]
    assert [e.stage for e in result.evaluations] == ["static", "finetune"]


def test_empty_stage_list_runs_nothing(talking):
    scene = scene_from_truth(talking.truth)
    result = run_pipeline(scene, talking, run_config(), [])
    assert result.stages == [] and result.final is None


def test_single_branch_head_is_the_face_render(blob_scene):
    cloud, camera = blob_scene
    scene = scene_from_truth(make_rig(SYNTHETIC_RIG.BLOBS, DataConfig(width=16, height=16)).truth)
    scene.face.cloud = cloud
    assert_array_equal(render_head(scene, camera), rasterize_forward(cloud, camera).image)


def test_sync_error_of_an_undeformed_mouth(talking):
    scene = scene_from_truth(talking.truth)
    expected = np.mean([np.linalg.norm(MOUTH_AMPLITUDE) * abs(np.sin(talking.features.audio[f, 0])) for f in range(3)])
    assert mouth_sync_error(scene, talking) == pytest.approx(expected)


@pytest.mark.slow
def test_self_reconstruction_reaches_30_db():
    cfg = RunConfig(
        data=DataConfig(n_views=4, width=64, height=64, init_points=32, seed=0),
        schedule=TrainSchedule(static_iters=2000, log_interval=200),
    )
    dataset = make_rig(SYNTHETIC_RIG.BLOBS, cfg.data)
    result = run_pipeline(init_scene(dataset, cfg), dataset, cfg, [STAGE.STATIC])
    assert result.final.psnr >= 30.0


@pytest.mark.slow
def test_trained_deformation_tracks_the_mouth():
    data = DataConfig(n_frames=24, width=32, height=32, seed=1)
    cfg = RunConfig(
        data=data,
        schedule=TrainSchedule(deform_iters=1500, densify_in_deform=False, optimize_base_geometry=False,
                               log_interval=250),
    )
    dataset = make_rig(SYNTHETIC_RIG.TALKING, data)
    scene = scene_from_truth(dataset.truth)
    ensure_deformers(scene, dataset, cfg)
    untrained = mouth_sync_error(scene, dataset)
    run_stage_deform(scene, dataset, cfg)
    assert mouth_sync_error(scene, dataset) * 5.0 <= untrained


@pytest.mark.slow
def test_pixel_aware_densification_wins_on_the_stripe():
    wins = 0
    for seed in range(3):
        scores = {}
        for policy in DENSIFY_POLICY:
            cfg = RunConfig(
                data=DataConfig(n_views=4, width=64, height=64, seed=seed),
                densify=DensifyConfig(policy=policy, start_iter=100, interval=50),
                schedule=TrainSchedule(static_iters=800, seed=seed, log_interval=200),
            )
            dataset = make_rig(SYNTHETIC_RIG.STRIPE, cfg.data)
            result = run_pipeline(init_scene(dataset, cfg), dataset, cfg, [STAGE.STATIC])
            scores[policy] = result.final.region_psnr
        wins += scores[DENSIFY_POLICY.PIXEL_AWARE] >= scores[DENSIFY_POLICY.BASELINE]
    assert wins >= 2
