import json
import os

import pandas as pd
import pytest
from click.testing import CliRunner

from app import APP
from main import run

SMALL = {
    "camera": {"width": 12, "height": 12, "fx": 15.0, "fy": 15.0, "eye": [0.0, 0.0, -3.0]},
    "data": {"width": 12, "height": 12, "n_views": 2, "n_frames": 3, "init_points": 4},
    "schedule": {"static_iters": 3, "deform_iters": 2, "finetune_iters": 1, "log_interval": 1},
    "encoder": {"levels": 2, "log2_table_size": 8, "max_resolution": 32},
    "mgf": {"projected_dim": 4, "hidden_width": 8, "hidden_layers": 1},
}


@pytest.fixture
def run_json(tmp_path, log_dir):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


@pytest.fixture
def talking_targets(tmp_path, run_json):
    out = str(tmp_path / "talking")
    assert run(["synth", "--rig", "talking", "--config", run_json, "--out", out]) == 0
    return out


def test_help_lists_every_command():
    result = CliRunner().invoke(APP, ["--help"])
    assert result.exit_code == 0
    for name in ["fit", "render", "animate", "compare-densify", "gradcheck", "stats", "bench", "synth"]:
        assert name in result.output


def test_version(log_dir):
    assert run(["--version"]) == 0


def test_fit_render_animate(tmp_path, run_json, talking_targets):
    ckpt = str(tmp_path / "ckpt")
    assert run(["fit", "--config", run_json, "--targets", talking_targets, "--out", ckpt]) == 0
    for name in ["model.pgsw", "face.ply", "mouth.ply", "train_log.csv", "eval_log.csv", "preview_0000.png"]:
        assert os.path.isfile(os.path.join(ckpt, name)), name
    assert list(pd.read_csv(os.path.join(ckpt, "eval_log.csv"))["stage"]) == ["static", "deform", "finetune"]

    head = str(tmp_path / "head.png")
    features = os.path.join(talking_targets, "features.pgsf")
    assert run(["render", "--config", run_json, "--checkpoint", ckpt, "--features", features,
                "--frame", "2", "--out", head]) == 0
    assert os.path.isfile(head)

    frames = str(tmp_path / "frames")
    assert run(["animate", "--config", run_json, "--checkpoint", ckpt, "--features", features,
                "--count", "2", "--out", frames]) == 0
    assert sorted(os.listdir(frames)) == ["frame_0000.png", "frame_0001.png"]


def test_fit_and_render_are_reproducible_across_runs(tmp_path, run_json, talking_targets):
    features = os.path.join(talking_targets, "features.pgsf")
    outputs = []
    for name in ("first", "second"):
        ckpt = str(tmp_path / name)
        head = os.path.join(ckpt, "head.png")
        assert run(["fit", "--config", run_json, "--targets", talking_targets, "--out", ckpt]) == 0
        assert run(["render", "--config", run_json, "--checkpoint", ckpt, "--features", features,
                    "--frame", "1", "--out", head]) == 0
        files = sorted(f for f in os.listdir(ckpt) if os.path.isfile(os.path.join(ckpt, f)))
        outputs.append({f: (tmp_path / name / f).read_bytes() for f in files})
    first, second = outputs
    assert {"model.pgsw", "face.ply", "mouth.ply", "train_log.csv", "preview_0000.png", "head.png"} <= set(first)
    assert sorted(first) == sorted(second)
    for name, data in first.items():
        assert data == second[name], name


def test_empty_stage_list_copies_the_initialization(tmp_path, run_json, talking_targets):
    ckpt = str(tmp_path / "init")
    assert run(["fit", "--config", run_json, "--targets", talking_targets, "--out", ckpt, "--stage", ""]) == 0
    assert os.path.isfile(os.path.join(ckpt, "model.pgsw"))
    assert pd.read_csv(os.path.join(ckpt, "train_log.csv")).empty


def test_stats_and_bench(tmp_path, run_json):
    targets = str(tmp_path / "blobs")
    ckpt = str(tmp_path / "ckpt")
    assert run(["synth", "--rig", "blobs", "--config", run_json, "--out", targets]) == 0
    assert run(["fit", "--config", run_json, "--targets", targets, "--out", ckpt, "--stage", "static"]) == 0

    stats = str(tmp_path / "stats.csv")
    assert run(["stats", "--config", run_json, "--checkpoint", ckpt, "--targets", targets, "--out", stats]) == 0
    table = pd.read_csv(stats)
    assert {"views_seen", "score_baseline", "decision_pixel_aware"} <= set(table.columns)

    dump = str(tmp_path / "dump.csv")
    assert run(["stats", "--config", run_json, "--checkpoint", ckpt, "--out", dump]) == 0
    forward_only = pd.read_csv(dump)
    assert len(forward_only) == len(table)
    # no backward pass without targets, so no gradient column
    assert list(forward_only.columns) == ["index", "valid", "R", "m"]

    bench = str(tmp_path / "bench.csv")
    assert run(["bench", "--config", run_json, "--checkpoint", ckpt, "--frames", "2", "--out", bench]) == 0
    assert pd.read_csv(bench)["frames"].tolist() == [2]


def test_compare_densify_reports_both_policies(tmp_path, run_json):
    targets = str(tmp_path / "stripe")
    out = str(tmp_path / "compare")
    assert run(["synth", "--rig", "stripe", "--config", run_json, "--out", targets]) == 0
    assert run(["compare-densify", "--config", run_json, "--targets", targets, "--out", out]) == 0
    report = pd.read_csv(os.path.join(out, "compare_densify.csv"))
    assert report["policy"].tolist() == ["baseline", "pixel-aware"]
    assert os.path.isfile(os.path.join(out, "points_pixel-aware.png"))


def test_gradcheck_exit_codes(log_dir):
    assert run(["gradcheck", "--suite", "losses", "--instances", "1"]) == 0
    assert run(["gradcheck", "--suite", "losses", "--instances", "1", "--fault", "losses"]) == 1


@pytest.mark.parametrize("argv", [
    ["fit", "--out", "x", "--policy", "greedy"],
    ["fit", "--out", "x", "--stage", "static,warmup"],
    ["synth", "--rig", "teapot", "--out", "x"],
    ["render", "--checkpoint", "missing", "--out", "x.png"],
])
def test_input_errors_exit_with_2(tmp_path, log_dir, argv, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 2


def test_invalid_config_exits_with_2(tmp_path, log_dir):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"render": {"tile_size": 0}}))
    assert run(["synth", "--rig", "blobs", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_corrupt_initial_cloud_exits_with_2(tmp_path, run_json):
    targets = tmp_path / "blobs"
    assert run(["synth", "--rig", "blobs", "--config", run_json, "--out", str(targets)]) == 0
    (targets / "init_face.ply").write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 4\nend_header\n")
    assert run(["fit", "--config", run_json, "--targets", str(targets), "--out", str(tmp_path / "c")]) == 2


def test_fit_without_data_exits_with_2(tmp_path, run_json):
    assert run(["fit", "--config", run_json, "--out", str(tmp_path / "c")]) == 2
