import numpy as np
import pytest

from eivarx.mc_harness import EXAMPLE1, EXAMPLE2
from eivarx.signal_gen import NoiseSpec, simulate_dataset


@pytest.fixture(scope="session")
def example1_series():
    return simulate_dataset(EXAMPLE1, NoiseSpec(0.2, 0.1), 1023, seed=11)


@pytest.fixture(scope="session")
def example2_series():
    return simulate_dataset(EXAMPLE2, NoiseSpec(0.15, 0.1), 4095, seed=5)


def random_stable_ar(rng, order, low=0.4, high=0.9):
    """Real-rooted AR polynomial with root moduli in [low, high]."""
    roots = rng.uniform(low, high, order) * rng.choice([-1.0, 1.0], order)
    return np.poly(roots)[1:]


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_line():
    """Record one PASS/FAIL line; lines are echoed in the terminal summary."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
