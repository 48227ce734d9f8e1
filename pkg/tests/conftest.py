import numpy as np
import pytest

from cnswave.equilibrium import PhysicalParams
from cnswave.operators import Model
from cnswave.spaces import Grid


@pytest.fixture(scope="session")
def grid():
    return Grid(16.0, 32, 16)


@pytest.fixture(scope="session")
def model(grid):
    return Model(grid, PhysicalParams())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def surface_mode(grid, k, phase=0.0):
    return np.cos(2 * np.pi * k * grid.x / grid.L + phase)


# acceptance criteria register here; one summary line per criterion
CRITERIA = [f"C{i}" for i in range(1, 11)]
_ACCEPTANCE: dict = {}


@pytest.fixture
def accept():
    def record(cid, ok, detail):
        _ACCEPTANCE.setdefault(cid, []).append((bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        rows = _ACCEPTANCE.get(cid)
        if rows is None:
            terminalreporter.write_line(f"FAIL {cid}: not evaluated")
            continue
        ok = all(r[0] for r in rows)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {cid}: " + "; ".join(r[1] for r in rows))
