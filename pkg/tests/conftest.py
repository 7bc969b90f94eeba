import numpy as np
import pytest

from carefulkin.ingest import Marker, MarkerTrack


def make_track(marker, n=200, rate=100.0, valid=None, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    xyz = np.column_stack([np.sin(t), np.cos(t), t]) * 100 + rng.normal(0, 0.1, (n, 3))
    valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    xyz = xyz.copy()
    xyz[~valid] = np.nan
    return MarkerTrack(marker, rate, t, xyz, valid)


@pytest.fixture
def four_tracks():
    return [make_track(m, seed=i) for i, m in enumerate(Marker)]


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # a fixture that fails in setup still counts as a failed criterion
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _ACCEPTANCE.append(("PASS" if report.passed else "FAIL", marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}" + (f": {detail}" if detail else ""))
