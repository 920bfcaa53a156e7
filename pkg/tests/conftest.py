import numpy as np
import pytest

from cobra_regression.data import Dataset, RngStream
from cobra_regression.machines import ExternalPredictions, MachinePool, MachineSpec, TrainedMachine

CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, text = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")


def lookup_pool(features, columns, names=None):
    """A pool of lookup-table machines returning the given output columns."""
    features = np.asarray(features, dtype=float)
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    names = names or [f"m{j}" for j in range(columns.shape[1])]
    machines = [TrainedMachine(MachineSpec("external", name=n),
                               ExternalPredictions(features, columns[:, j]),
                               features.shape[0], features.shape[1])
                for j, n in enumerate(names)]
    return MachinePool(tuple(machines))


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def small_regression():
    g = np.random.default_rng(0)
    X = g.uniform(-1, 1, (60, 3))
    y = X[:, 0] - 2 * X[:, 1] + 0.1 * g.standard_normal(60)
    return Dataset(X, y)
