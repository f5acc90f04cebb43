"""Session fixtures: tiny hand-built graphs plus a few generated topologies."""

import pytest

from byzcount.graph import HMultigraph, augment_small_world, generate_h_graph

# One verdict line per acceptance criterion, echoed in the terminal summary
# so a plain ``pytest -v`` run ends with the full scorecard.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    def record(num: int, ok: bool, detail: str) -> None:
        line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def path6():
    """Six nodes in a line, k=1: small enough to trace every message by hand."""
    edges = [(u, u + 1, 1) for u in range(5)]
    h = HMultigraph.from_edges(6, 2, edges)
    return augment_small_world(h, k=1)


@pytest.fixture(scope="session")
def tree_d8():
    """Exact depth-2 tree for an 8-regular root: 1 + 8 + 56 = 65 nodes."""
    edges = [(0, c, 1) for c in range(1, 9)]
    nxt = 9
    for c in range(1, 9):
        for _ in range(7):
            edges.append((c, nxt, 1))
            nxt += 1
    return HMultigraph.from_edges(65, 8, edges)


@pytest.fixture(scope="session")
def cycle4():
    return generate_h_graph(4, 2, seed=0)


@pytest.fixture(scope="session")
def cycle6():
    return generate_h_graph(6, 2, seed=0)


@pytest.fixture(scope="session")
def topo200():
    return augment_small_world(generate_h_graph(200, 8, seed=7))


@pytest.fixture(scope="session")
def topo512():
    return augment_small_world(generate_h_graph(512, 8, seed=3))


@pytest.fixture(scope="session")
def topo1024():
    return augment_small_world(generate_h_graph(1024, 8, seed=11))
