import numpy as np
import pandas as pd
import pytest

from inflpanel.dgp import DgpParams, generate
from inflpanel.panel import INDEX_NAMES, PanelDataset


def make_panel(rows, columns):
    """Panel from ``[(unit, year, v1, v2, ...), ...]``."""
    units = [r[0] for r in rows]
    years = [r[1] for r in rows]
    index = pd.MultiIndex.from_arrays([units, np.asarray(years, dtype=np.int64)], names=INDEX_NAMES)
    values = np.array([r[2:] for r in rows], dtype=float).reshape(len(rows), len(columns))
    return PanelDataset(pd.DataFrame(values, index=index, columns=columns))


@pytest.fixture
def toy():
    # 3 units x 5 years, unit "c" has a gap in 2016
    rows = []
    for u, base in (("a", 1.0), ("b", 10.0), ("c", 100.0)):
        for y in range(2013, 2018):
            if u == "c" and y == 2016:
                continue
            rows.append((u, y, base + (y - 2013), (y - 2013) ** 2))
    return make_panel(rows, ["x", "z"])


@pytest.fixture(scope="session")
def dgp_panel():
    params = DgpParams(n_units=60, n_periods=10, rho0=0.5, rho1=-0.05, rho2=-0.03, seed=11)
    return generate(params)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
