import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from branchtorus.core_model import DiscreteMeasure, GridDensity

settings.register_profile(
    "repo", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def measure_suite():
    """Twelve probability measures on T^1 and T^2: atoms, boxes, a grid."""
    rng = np.random.Generator(np.random.Philox(12345))
    out = []
    for n in (1, 2, 5, 10):
        out.append(DiscreteMeasure(rng.random((n, 2)), rng.random(n) + 0.1).normalized())
    for n in (1, 3, 6):
        c = rng.uniform(0.1, 0.9, size=(n, 2))
        g = GridDensity.centered_boxes(np.round(c * 8) / 8 + 1 / 16, 1 / 8, np.full(n, 1 / n))
        out.append(g)
    out.append(DiscreteMeasure.uniform_grid(3))
    out.append(DiscreteMeasure(rng.random((4, 1)), [0.25] * 4))
    out.append(GridDensity([[0.0], [0.5]], [[0.5], [1.0]], [0.2, 0.8]))
    out.append(DiscreteMeasure([[0.5]], [1.0]))
    out.append(GridDensity([[0.2, 0.2]], [[0.6, 0.9]], [1.0]))
    return out


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
