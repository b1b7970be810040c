import numpy as np
import pytest

from panolevel.topo import make_toy_panorama

# nodeid -> (criterion number, title); filled at collection time.
_CRITERIA = {}
_OUTCOMES = {}
_ELAPSED = {}


@pytest.fixture
def smooth_pano():
    return make_toy_panorama(11, 64, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    # Setup counts too: shared fixtures such as the training runs live there.
    _ELAPSED[report.nodeid] = _ELAPSED.get(report.nodeid, 0.0) + report.duration
    if report.when == "call" or report.outcome != "passed":
        if _OUTCOMES.get(report.nodeid, "passed") == "passed":
            _OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    groups = {}
    for nodeid, (num, title) in _CRITERIA.items():
        groups.setdefault(num, (title, []))[1].append(nodeid)
    terminalreporter.section("acceptance criteria")
    for num in sorted(groups):
        title, nodes = groups[num]
        outcomes = [_OUTCOMES.get(n, "not run") for n in nodes]
        if all(o == "passed" for o in outcomes):
            tag = "PASS"
        elif any(o == "failed" for o in outcomes):
            tag = "FAIL"
        else:
            tag = "INCOMPLETE"
        secs = sum(_ELAPSED.get(n, 0.0) for n in nodes)
        terminalreporter.write_line(f"criterion {num:2d}: {tag:<10} {title} ({len(nodes)} checks, {secs:.1f}s)")
