from __future__ import annotations

import json
from pathlib import Path

import pytest

from codemem import assets
from codemem.orchestrator import Runtime

VECTORS_PATH = Path(__file__).parent / "vectors" / "bridge_frames.jsonl"


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(criterion, title): acceptance-criterion test"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        terminal = item.config.pluginmanager.get_plugin("terminalreporter")
        if terminal is not None:
            status = "PASS" if report.passed else "FAIL"
            terminal.write_line(
                f"[criterion {marker.kwargs['criterion']:>2}] {status}: "
                f"{marker.kwargs['title']}"
            )


def load_vectors() -> list[dict]:
    vectors = []
    with VECTORS_PATH.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                vectors.append(json.loads(line))
    return vectors


@pytest.fixture
def runtime(tmp_path: Path) -> Runtime:
    """Fresh runtime over a temp data dir with the builtin manifest imported."""
    rt = Runtime(tmp_path / "data")
    rt.bootstrap_builtin()
    return rt


@pytest.fixture
def runtime_factory(tmp_path: Path):
    """Callable producing isolated runtimes (fresh data dir each call)."""
    counter = {"n": 0}

    def factory(**kwargs) -> Runtime:
        counter["n"] += 1
        return Runtime(tmp_path / f"rt{counter['n']}", **kwargs)

    return factory


@pytest.fixture
def fixture_session(runtime: Runtime):
    """A session with the case-study scenario loaded."""
    return runtime.create_session(scenario=assets.builtin_scenario_doc())
