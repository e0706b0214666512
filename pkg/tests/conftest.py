import numpy as np
import pytest

from fdiabench.grid import MeasurementModel, build_measurement_model, load_case


@pytest.fixture(scope="session")
def case14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def case30():
    return load_case("ieee30")


@pytest.fixture(scope="session")
def model14(case14):
    return build_measurement_model(case14)


@pytest.fixture(scope="session")
def model30(case30):
    return build_measurement_model(case30)


@pytest.fixture
def toy_model():
    """The 3x2 hand case: H = [[1,0],[0,1],[1,1]], R = I."""
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return MeasurementModel(H, np.eye(3), ("m1", "m2", "m3"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: list = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail")
    status = "PASS" if rep.passed else "FAIL"
    _CRITERIA.append((number, f"[{status}] criterion {number:2d}: {title}" + (f" -- {detail}" if detail else "")))


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
