import numpy as np
import pytest

from ahvortex.modes import assemble_operator, solve_shape_mode
from ahvortex.profile import RadialGrid, solve_profile


@pytest.fixture(scope="session")
def profile1():
    return solve_profile(1, 1.0, RadialGrid(3001, 30.0))


@pytest.fixture(scope="session")
def profile2():
    return solve_profile(2, 1.0, RadialGrid(3001, 30.0))


@pytest.fixture(scope="session")
def mode1(profile1):
    return solve_shape_mode(assemble_operator(profile1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """record(number, title, ok, detail): one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        lines.append((number, title, bool(ok), detail))
        print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
