import numpy as np
import pytest

from socialrank.data import Dataset, SignedSocialGraph, split_ratings
from socialrank.synth import SynthConfig, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planted_small():
    return generate(SynthConfig(n_users=40, n_items=80, n_clusters=2, density=0.1, seed=3))


@pytest.fixture
def toy():
    """Five users, eight items, implicit feedback, a small signed graph."""
    rows = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (1, 3), (2, 4), (2, 5),
            (3, 5), (3, 6), (3, 7), (4, 0), (4, 7), (0, 3), (2, 6), (4, 1)]
    users, items = zip(*rows)
    ds = Dataset(5, 8, users, items, np.ones(len(rows)), "implicit")
    graph = SignedSocialGraph.from_edges(5, [(0, 1), (1, 0), (2, 3)], [(0, 2), (3, 4)])
    split = split_ratings(ds, 0.75, 0)
    return ds, graph, split


# ----------------------------------------------------------------------
# acceptance summary: tests/test_acceptance.py records one line per criterion

ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
