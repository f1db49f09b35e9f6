import numpy as np
import pytest

from slelab import greens as G
from slelab import sampler as S

_LOG_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LOG_KEY] = []


@pytest.fixture
def acceptance_log(request, capsys):
    """Record one PASS/FAIL line per criterion, echoed live and in the summary."""
    lines = request.config.stash[_LOG_KEY]

    def log(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LOG_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def k83():
    return S.kappa_params(8.0 / 3.0)


@pytest.fixture(scope="session")
def small_table(k83):
    """Coarse kappa = 8/3 table, good enough for plumbing tests."""
    return G.build_phi_table(k83, G.PhiGrid(8, 1e-3, 1e4, 24), 200, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
