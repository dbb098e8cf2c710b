import os
import time
from pathlib import Path

import pytest

from vpsim import cli
from vpsim import formats as fmt

# Outcomes of tests marked ``example``; the acceptance suite reads them.
EXAMPLE_OUTCOMES: dict[str, str] = {}
CRITERIA_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "example: a documented input/output example")


def pytest_collection_modifyitems(session, config, items):
    # Acceptance criteria summarize the unit examples, so they run last.
    items.sort(key=lambda it: "test_acceptance.py" in it.nodeid)


def pytest_runtest_logreport(report):
    if "example" not in report.keywords:
        return
    if hasattr(report, "wasxfail"):
        outcome = "xfailed"
    elif report.failed:
        outcome = "failed"
    elif report.when == "call" or report.skipped:
        outcome = report.outcome
    else:
        return
    if EXAMPLE_OUTCOMES.get(report.nodeid) in (None, "passed"):
        EXAMPLE_OUTCOMES[report.nodeid] = outcome


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)


class DemoRun:
    def __init__(self, name, path, seconds, exit_code):
        self.name = name
        self.path = Path(path)
        self.seconds = seconds
        self.exit_code = exit_code
        self._rd = None

    @property
    def rd(self) -> cli.RunDirectory:
        if self._rd is None:
            self._rd = cli.RunDirectory(self.path)
        return self._rd

    @property
    def series(self):
        return self.rd.series

    def series_bytes(self) -> bytes:
        return (self.path / "series.csv").read_bytes()


def run_config_text(text, directory, threads=None) -> DemoRun:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg_path = directory / "run.cfg"
    cfg_path.write_text(text)
    old = os.environ.get("VP_THREADS")
    if threads is None:
        os.environ.pop("VP_THREADS", None)
    else:
        os.environ["VP_THREADS"] = str(threads)
    try:
        t0 = time.perf_counter()
        code = cli.cmd_run(cfg_path, directory / "out")
        elapsed = time.perf_counter() - t0
    finally:
        if old is None:
            os.environ.pop("VP_THREADS", None)
        else:
            os.environ["VP_THREADS"] = old
    return DemoRun(directory.name, directory / "out", elapsed, code)


class DemoCache:
    """Runs each (demo, variant) once per session."""

    def __init__(self, root):
        self.root = Path(root)
        self.runs = {}

    def get(self, name, threads=None, tag="", edit=None) -> DemoRun:
        key = (name, threads, tag)
        if key not in self.runs:
            text = cli.demo_text(name)
            if edit is not None:
                text = edit(text)
            sub = f"{name}-t{threads or 'auto'}{('-' + tag) if tag else ''}"
            self.runs[key] = run_config_text(text, self.root / sub, threads)
        return self.runs[key]


@pytest.fixture(scope="session")
def demos(tmp_path_factory):
    return DemoCache(tmp_path_factory.mktemp("demos"))


@pytest.fixture(scope="session")
def rvp_run(demos):
    return demos.get("rvp_small")


@pytest.fixture(scope="session")
def vp_run(demos):
    return demos.get("vp_small")


@pytest.fixture(scope="session")
def rvpn_run(demos):
    return demos.get("rvpn_pair")


@pytest.fixture(scope="session")
def vpn_run(demos):
    return demos.get("vpn_pair")


@pytest.fixture(scope="session")
def freestream_run(demos):
    return demos.get("freestream_sanity")


def read_series(path):
    return fmt.read_csv_columns(path)
