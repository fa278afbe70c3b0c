import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skelmotion.skeleton import JOINTS, Frame  # noqa: E402
from skelmotion.synth import REST, MotionSpec, generate, rest_rig  # noqa: E402


@pytest.fixture
def rest_frame():
    return Frame(0.0, REST.copy())


@pytest.fixture
def rig():
    return rest_rig()


@pytest.fixture(scope="session")
def trace_clip():
    """Random smooth rotation trace, 1200 frames."""
    return generate(MotionSpec("trace", duration_s=40.0, fps=30.0, seed=7))


def random_frame(rng, t=0.0):
    return Frame(t, rng.normal(size=(len(JOINTS), 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def verdict(request, capsys):
    """Print and remember one acceptance line, then fail the test if the criterion failed."""

    def record(criterion: int, name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {name}: {detail}"
        request.config.stash[_ACCEPTANCE_KEY].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[", 1)[1].split("]", 1)[0])):
            terminalreporter.write_line(line)
