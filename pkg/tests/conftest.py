import json
import pathlib

import pytest
from hypothesis import HealthCheck, settings

ORACLES = json.loads((pathlib.Path(__file__).parent / "data" / "oracles.json").read_text())

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def oracles():
    """Frozen reference values from scripts/compute_oracles.py."""
    return ORACLES


def assert_within_mc(value, ref, k=4.0):
    """|value - ref| < k * stderr for a Monte Carlo reference entry."""
    gap = abs(value - ref["value"])
    assert gap < k * ref["stderr"], f"{value} vs MC {ref['value']} (se {ref['stderr']}, {gap / ref['stderr']:.2f} se)"


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    key = mark.args[0]
    if rep.when == "call" or rep.failed:
        prev = _ACCEPTANCE.get(key, (mark.args[1], True, 0.0))
        _ACCEPTANCE[key] = (mark.args[1], prev[1] and rep.passed, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        title, ok, secs = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({secs:.1f}s)")
