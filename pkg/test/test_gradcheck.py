import pytest

from errors import ConfigError
from data_types.run_config import RunConfig
from logic.gradcheck import central_difference, relative_error, run_gradcheck, SUITES


def test_central_difference_of_a_cubic():
    assert central_difference(lambda h: (2.0 + h) ** 3, step=1e-4) == pytest.approx(12.0, rel=1e-7)


def test_relative_error_is_floored():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.001) == pytest.approx(0.001 / 1.001)


@pytest.mark.parametrize("suite", ["encoder", "mgf.mouth", "mgf.face", "losses"])
def test_small_suites_pass(suite):
    report = run_gradcheck(RunConfig(), instances=2, suites=(suite,))
    assert report.passed, report.text()
    assert all(line.checked > 0 for line in report.lines)


def test_injected_fault_is_caught():
    report = run_gradcheck(RunConfig(), instances=2, suites=("mgf.mouth",), fault="mgf.mouth")
    assert not report.passed


def test_report_frame():
    report = run_gradcheck(RunConfig(), instances=1, suites=("losses",))
    frame = report.frame()
    assert list(frame.columns) == ["suite", "param", "max_rel_error", "checked", "excluded", "passed"]
    assert set(frame["suite"]) == {"losses"}


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_gradcheck(suites=("optics",))


@pytest.mark.slow
def test_every_suite_on_twenty_instances():
    report = run_gradcheck(RunConfig(), instances=20, suites=SUITES)
    assert report.passed, report.text()
