import numpy as np
import pytest

from stgcn_tem.topology import chain, ntu25, openpose18, star

_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: ``criterion(name, passed, detail)``; asserts ``passed``."""

    def record(name: str, passed: bool, detail: str = ""):
        _criteria.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


TOPOLOGIES = {
    "chain3": lambda: chain(3, cog=1),
    "star5": lambda: star(5),
    "ntu25": ntu25,
    "openpose18": openpose18,
}


@pytest.fixture(params=sorted(TOPOLOGIES))
def named_topology(request):
    return request.param, TOPOLOGIES[request.param]()
