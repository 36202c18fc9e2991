"""Shared fixtures plus a terminal summary of the acceptance criteria.

Tests marked ``@pytest.mark.acceptance(number, title)`` get one
``criterion NN [PASS|FAIL]`` line in the terminal summary so the gate
can be read at a glance.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from emrkg.schema import EntitySchema

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return FIXTURES / "corpus"


@pytest.fixture(scope="session")
def kb_file() -> Path:
    return FIXTURES / "kb_small.jsonl"


@pytest.fixture(scope="session")
def derm_dir() -> Path:
    return FIXTURES / "derm"


@pytest.fixture(scope="session")
def pipeline_config_file() -> Path:
    return FIXTURES / "pipeline.json"


@pytest.fixture(scope="session")
def schema() -> EntitySchema:
    return EntitySchema()


# -- acceptance summary ------------------------------------------------

_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        number, title = marker.args
        if report.when == "call":
            _RESULTS[number] = (title, "PASS" if report.passed else "FAIL")
        elif report.when == "setup" and not report.passed:
            _RESULTS[number] = (title, "SKIP" if report.skipped else "FAIL")
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} [{outcome}] {title}")
