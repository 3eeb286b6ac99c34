"""Shared small topologies and an independent BFS oracle."""

from collections import deque

import pytest

from bgpdes.topology import Graph, generate_glp


def path_graph(n):
    return Graph(n, [(i, i + 1) for i in range(1, n)])


def cycle_graph(n):
    return Graph(n, [(i, i % n + 1) for i in range(1, n + 1)])


def complete_graph(n):
    return Graph(n, [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)])


def bfs_distances(g, src):
    """Hop counts from ``src``; written independently of the library."""
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for w in g.adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


@pytest.fixture(scope="session")
def glp100():
    return generate_glp(100, seed=7)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
