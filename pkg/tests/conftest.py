import itertools

import numpy as np
import pytest


def feasible_support(matrix, target, support, tol=1e-9):
    """Oracle: does ``matrix[:, support] z = target`` have a solution with ``z >= 0``?

    Solved by least squares on the restricted columns; independent of the
    elimination code paths under test.
    """
    support = list(support)
    if not support:
        return bool(np.allclose(target, 0.0))
    sub = matrix[:, support]
    z, *_ = np.linalg.lstsq(sub, target, rcond=None)
    scale = 1.0 + np.max(np.abs(target))
    return bool(np.max(np.abs(sub @ z - target)) <= tol * scale and np.all(z >= -tol * scale))


def feasible_supports(matrix, target, max_size, tol=1e-9):
    n = matrix.shape[1]
    out = []
    for size in range(1, max_size + 1):
        for combo in itertools.combinations(range(n), size):
            if feasible_support(matrix, target, combo, tol):
                out.append(combo)
    return out


def random_system(rng, n, m):
    A = np.vstack([np.ones(n), rng.uniform(-1.0, 1.0, (m, n))])
    x = rng.random(n) + 1e-3
    return A, x


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


class AcceptanceRecorder:
    def __init__(self):
        self.label = None
        self.recorded = False

    def start(self, number, title):
        self.label = f"criterion {number}: {title}"

    def record(self, checks: dict, detail: str = ""):
        """Log one PASS/FAIL line; ``checks`` maps check names to booleans."""
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"{status} {self.label}"
        if detail:
            line += f" | {detail}"
        if failed:
            line += f" | failed: {', '.join(failed)}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        self.recorded = True
        return not failed


@pytest.fixture
def acceptance():
    rec = AcceptanceRecorder()
    yield rec
    if rec.label and not rec.recorded:
        ACCEPTANCE_LINES.append(f"FAIL {rec.label} | did not complete")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
