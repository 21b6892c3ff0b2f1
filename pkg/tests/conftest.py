import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fapp import case_config, run_episode  # noqa: E402


class TimedEpisode:
    def __init__(self, result, seconds):
        self.result = result
        self.seconds = seconds

    def __getattr__(self, name):
        return getattr(self.result, name)


def _timed(config, reference=None):
    t0 = time.perf_counter()
    result = run_episode(config, reference)
    return TimedEpisode(result, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def case_i_fapp():
    return _timed(case_config("i"))


@pytest.fixture(scope="session")
def nominal_reference(case_i_fapp):
    return case_i_fapp.reference


@pytest.fixture(scope="session")
def case_i_baseline(nominal_reference):
    return _timed(case_config("i", "baseline"), nominal_reference)


@pytest.fixture(scope="session")
def case_ii_fapp():
    return _timed(case_config("ii"))


@pytest.fixture(scope="session")
def case_iii_fapp():
    return _timed(case_config("iii"))


@pytest.fixture(scope="session")
def case_iii_baseline(nominal_reference):
    return _timed(case_config("iii", "baseline"), nominal_reference)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
