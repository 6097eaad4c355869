import itertools
import sys

import numpy as np
import pytest

from activebnsl.core import Dag, DiscreteBayesNet, random_dag, random_net


def brute_force_dags(d: int, k: int) -> list[Dag]:
    """All DAGs on d labeled nodes with in-degree <= k, from every edge subset."""
    pairs = [(a, b) for a in range(d) for b in range(d) if a != b]
    out = []
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        edges = [p for p, on in zip(pairs, bits) if on]
        if _acyclic(d, edges):
            g = Dag.from_edges(d, edges)
            if g.max_in_degree <= k:
                out.append(g)
    return out


def _acyclic(d, edges):
    indeg = [0] * d
    for _, b in edges:
        indeg[b] += 1
    stack = [u for u in range(d) if indeg[u] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for a, b in edges:
            if a == u:
                indeg[b] -= 1
                if indeg[b] == 0:
                    stack.append(b)
    return seen == d


def copy_chain(d: int, p_root: float = 0.3) -> DiscreteBayesNet:
    """X0 -> X1 -> ... with every link a deterministic copy."""
    parents = [()] + [(i - 1,) for i in range(1, d)]
    cpts = [np.array([[1 - p_root, p_root]])] + [np.eye(2) for _ in range(1, d)]
    return DiscreteBayesNet((2,) * d, Dag(tuple(parents)), tuple(cpts))


def independent_coins(d: int) -> DiscreteBayesNet:
    return DiscreteBayesNet((2,) * d, Dag.empty(d), tuple(np.array([[0.5, 0.5]]) for _ in range(d)))


def positive_net(d: int, k: int, seed: int) -> DiscreteBayesNet:
    rng = np.random.default_rng(seed)
    return random_net(random_dag(d, k, rng), rng, floor=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
