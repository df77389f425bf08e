import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CONFIGS = ROOT / "configs"

sys.path.insert(0, str(Path(__file__).parent))

# acceptance criterion outcomes, filled by test_acceptance.py
CRITERIA: dict[str, tuple[str, float]] = {}
_SETUP = pytest.StashKey[float]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None:
        return
    key = crit.args[0]
    # setup time counts too: the expensive pipeline runs live in fixtures
    if rep.when == "setup":
        item.stash[_SETUP] = rep.duration
        if rep.failed:
            CRITERIA[key] = ("FAIL", rep.duration)
    elif rep.when == "call":
        CRITERIA[key] = ("PASS" if rep.passed else "FAIL", rep.duration + item.stash.get(_SETUP, 0.0))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k.split()[0])):
        status, dur = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {status} ({dur:.1f}s)")
