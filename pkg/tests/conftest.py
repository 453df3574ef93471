from __future__ import annotations

from pathlib import Path

import pytest

from stochha.dsl import load

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
FIXTURE_NAMES = ("fig1", "fig1_forced", "fig2b", "fig2c", "fig3", "zeno_shrink")

_criteria: dict[int, list[tuple[str, str]]] = {}


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.sha"


def load_fixture(name: str):
    return load(fixture_path(name))[1]


@pytest.fixture(scope="session")
def fig1():
    return load_fixture("fig1")


@pytest.fixture(scope="session")
def fig2b():
    return load_fixture("fig2b")


@pytest.fixture(scope="session")
def fig2c():
    return load_fixture("fig2c")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, title = mark.args
        _criteria.setdefault(n, []).append((title, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        ok = all(o == "passed" for _, o in results)
        title = results[0][0]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
