import time

import pytest

from tcgl.harness.checkpoint import Checkpoint
from tcgl.harness.config import TrainConfig
from tcgl.harness.train import pretrain
from tcgl.model import init_model

RESULTS: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so tests can assert on it."""
    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        RESULTS.append(line)
        print(line)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


def _timed_run(config: TrainConfig):
    start = time.perf_counter()
    final, log = pretrain(config)
    return final, log, time.perf_counter() - start


@pytest.fixture(scope="session")
def default_run():
    """The default desk configuration trained once for the whole session."""
    return _timed_run(TrainConfig())


@pytest.fixture(scope="session")
def static_run():
    """Default configuration trained on the speed-0 control dataset."""
    return _timed_run(TrainConfig(dataset="static"))


@pytest.fixture(scope="session")
def untrained():
    config = TrainConfig()
    return Checkpoint.from_model(config, init_model(config))
