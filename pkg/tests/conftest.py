import numpy as np
import pytest

from imsim.config import Scheme, SchemeConfig, validate

# criterion number -> (title, outcome, details)
_CRITERIA: dict[int, list] = {}


def acceptance_configs():
    """The three configurations every structural acceptance check runs on."""
    return {
        "TI-PSM 8x4 G4 M8": validate(SchemeConfig(Scheme.TI_PSM, n_tx=8, n_rx=4, mod_order=8, groups=4, frame_slots=4, active_slots=2)),
        "TI-SM 8x4 M16": validate(SchemeConfig(Scheme.TI_SM, n_tx=8, n_rx=4, mod_order=16, frame_slots=4, active_slots=2)),
        "TI-PSM 12x4 G3 M2": validate(SchemeConfig(Scheme.TI_PSM, n_tx=12, n_rx=4, mod_order=2, groups=3, frame_slots=4, active_slots=2)),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report(request):
    """Attach measured values to the acceptance summary line of this test."""
    marker = request.node.get_closest_marker("acceptance")
    lines = []
    yield lines.append
    if marker is not None:
        _CRITERIA.setdefault(marker.args[0], [marker.kwargs.get("title", ""), None, []])[2].extend(lines)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    entry = _CRITERIA.setdefault(marker.args[0], [marker.kwargs.get("title", ""), None, []])
    entry[0] = marker.kwargs.get("title", entry[0])
    if rep.failed:
        entry[1] = "FAIL"
    elif rep.skipped:
        entry[1] = entry[1] or "SKIP"
    elif entry[1] is None:
        entry[1] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, details = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {outcome or 'NOT RUN'} - {title}")
        for line in details:
            terminalreporter.write_line(f"    {line}")
