import json

import pytest

from global_state import GLOBAL_STATE, PIPELINE_FLAGS


@pytest.fixture
def fresh(tmp_path):
    st = GLOBAL_STATE()
    st.load(str(tmp_path))
    yield st
    st.reset()


def _snapshot_file(tmp_path):
    files = sorted(tmp_path.glob("execution_state_*.json"))
    assert len(files) == 1
    return json.loads(files[0].read_text())


def test_flags_start_false_and_read_as_attributes(fresh):
    for flag in PIPELINE_FLAGS:
        assert getattr(fresh, flag) is False


def test_update_flag_persists(fresh, tmp_path):
    fresh.update_flag("staticStageDone")
    assert fresh.staticStageDone is True
    doc = _snapshot_file(tmp_path)
    assert doc["pipeline_flags"]["staticStageDone"] is True
    assert doc["save_reason"] == "flag_staticStageDone"


def test_unknown_flag_raises(fresh):
    with pytest.raises(AttributeError):
        fresh.update_flag("trainingDone")
    with pytest.raises(AttributeError):
        fresh.trainingDone


def test_pipeline_context_records_and_reraises(fresh, tmp_path):
    with pytest.raises(ValueError, match="boom"):
        with fresh.pipeline_context("static"):
            raise ValueError("boom")
    dumps = list(tmp_path.glob("exception_*.json"))
    assert len(dumps) == 1
    doc = json.loads(dumps[0].read_text())
    assert doc["type"] == "ValueError"
    assert doc["context"] == "[static]"
    assert "boom" in doc["traceback"]


def test_pipeline_context_success_saves(fresh, tmp_path):
    with fresh.pipeline_context("deform"):
        fresh.logger.info("inside")
    doc = _snapshot_file(tmp_path)
    assert doc["save_reason"] == "done_deform"
    assert any(r["message"] == "inside" for r in doc["logs"])


def test_nothing_written_before_load(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    st = GLOBAL_STATE()
    st.update_flag("datasetLoaded")
    try:
        raise RuntimeError("x")
    except RuntimeError as e:
        st.log_exception(e, "ctx")
    assert list(tmp_path.iterdir()) == []


def test_recent_records_are_bounded():
    st = GLOBAL_STATE()
    st.recent.records = type(st.recent.records)(maxlen=3)
    for k in range(5):
        st.logger.debug(f"line {k}")
    assert [r["message"] for r in st.recent.records] == ["line 2", "line 3", "line 4"]
