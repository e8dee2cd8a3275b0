import numpy as np
import pytest

from wheeltube.model import build_model


@pytest.fixture(scope="session")
def model():
    return build_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cfg_a():
    from wheeltube.config import load_config
    return load_config("paper_task_a")


@pytest.fixture(scope="session")
def artifact(cfg_a, model):
    from wheeltube.sim.runner import make_artifact
    return make_artifact(cfg_a, model)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def report_line(request, capsys):
    """Prints an acceptance line immediately and again in the terminal summary."""
    store = request.config.stash.setdefault(_LINES, [])

    def emit(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        store.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
