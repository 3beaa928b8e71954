import numpy as np
import pytest

from horoprod_lab.branching import OffspringLaw, sample_augmented, sample_gw
from horoprod_lab.trees import PointedTree, RootedTree


@pytest.fixture(scope="session")
def p13():
    return OffspringLaw.from_probs({1: 0.5, 3: 0.5})


@pytest.fixture(scope="session")
def p24():
    return OffspringLaw.from_probs({2: 0.5, 4: 0.5})


@pytest.fixture(scope="session")
def det1():
    return OffspringLaw.from_probs({1: 1.0}, override=True)


@pytest.fixture(scope="session")
def det2():
    return OffspringLaw.from_probs({2: 1.0}, override=True)


@pytest.fixture(scope="session")
def det3():
    return OffspringLaw.from_probs({3: 1.0}, override=True)


def leftmost_pointed(law, depth, seed, augmented=True):
    t = (sample_augmented if augmented else sample_gw)(
        law, depth=depth, seed=seed
    )
    return PointedTree(t, (1,) * depth)


def full_binary(depth):
    """Plain full binary tree as an explicit preorder encoding."""

    def enc(d):
        if d == depth:
            return [0]
        return [2] + enc(d + 1) + enc(d + 1)

    return RootedTree(np.array(enc(0), dtype=np.int64), depth_limit=depth)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance verdicts, which capture would hide."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
