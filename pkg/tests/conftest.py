import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from vixfolio import cli  # noqa: E402
from vixfolio.market_data import ReturnMatrix  # noqa: E402
from vixfolio.synthetic import bundled_config  # noqa: E402

# short evaluation window on the bundled data: every strategy, both universes
PIPELINE_ARGS = ["--from", "2021-09-01", "--to", "2021-09-16", "--universe", "both"]

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def make_matrix(returns, shortable_index=None, start=dt.date(2020, 1, 1), assets=None):
    r = np.asarray(returns, dtype=float)
    dates = tuple(start + dt.timedelta(days=k) for k in range(r.shape[0]))
    assets = tuple(assets or (f"A{i}" for i in range(r.shape[1])))
    return ReturnMatrix(dates, assets, r, shortable_index)


def crypto_like(rng, t, n_long, shortable=True):
    """Correlated heavy-ish returns; the last column (if shortable) moves against the rest."""
    f = 0.02 * rng.standard_t(5, size=t)
    long = 0.001 + f[:, None] * rng.uniform(0.5, 1.5, n_long) + 0.015 * rng.standard_normal((t, n_long))
    if not shortable:
        return long
    short = -0.8 * f + 0.04 * rng.standard_normal(t)
    return np.column_stack([long, short])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Two identical pipeline runs on the bundled synthetic data: [(exit code, output dir)]."""
    outs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        code = cli.main(["run", "--config", str(bundled_config()), *PIPELINE_ARGS, "--out", str(out)])
        outs.append((code, out))
    return outs
