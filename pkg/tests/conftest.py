import numpy as np
import pytest

_criteria: dict[int, list] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or not (call.when == "call" or call.excinfo is not None):
        return
    n, title = mark.args
    ok = call.excinfo is None
    entry = _criteria.setdefault(n, [title, True])
    entry[1] = entry[1] and ok


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
