import numpy as np
import pytest

from fsgen.core import FewShotTask


def random_task(rng, n=5, k=5, d=8, spread=2.0, query=0):
    centers = spread * rng.standard_normal((n, d))
    support = {c: centers[c] + rng.standard_normal((k, d)) for c in range(n)}
    q = {c: centers[c] + rng.standard_normal((query, d)) for c in range(n)} if query else None
    return FewShotTask.from_blocks(support, q)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Collects one pass/fail line per acceptance criterion."""
    def add(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
