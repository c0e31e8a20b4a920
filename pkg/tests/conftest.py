import numpy as np
import pytest

from tdfdr import make_rng


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


@pytest.fixture
def rng():
    return make_rng(11)


@pytest.fixture(scope="session")
def normal_report():
    """Two-group normal study, m = 2000, a = 3, pi0 = 0.8, 20 repetitions."""
    from tdfdr import SimulationConfig, run_experiment

    cfg = SimulationConfig(scenario="normal", m=2000, pi0=0.8, effect=3.0, group_size=5,
                           n_perm=19, reps=20, seed=0, thresholds=(0.05, 0.1, 0.2))
    return run_experiment(cfg)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
