import numpy as np
import pytest

from gcgm.graph import Graph, delaunay_triangulate


def random_graph(rng, n=8, f=4, with_coords=True, graph_id="g"):
    while True:
        xy = rng.uniform(0, 1, (n, 2))
        try:
            adj = delaunay_triangulate(xy) if n >= 3 else np.zeros((n, n), np.int8)
            break
        except ValueError:
            continue
    return Graph(rng.standard_normal((n, f)), adj, xy if with_coords else None, graph_id)


def path_graph(n, f=3, seed=0):
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n), np.int8)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1
    return Graph(rng.standard_normal((n, f)), adj)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
