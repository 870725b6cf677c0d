import numpy as np
import pytest

from motionpred.geometry import Homography


def random_homography(rng: np.random.Generator, perspective: float = 1e-4) -> Homography:
    """Well-conditioned projective map for image-scale coordinates."""
    angle = rng.uniform(-0.5, 0.5)
    scale = rng.uniform(0.7, 1.4)
    c, s = scale * np.cos(angle), scale * np.sin(angle)
    m = np.array([
        [c + rng.normal(0, 0.05), -s + rng.normal(0, 0.05), rng.uniform(-50, 50)],
        [s + rng.normal(0, 0.05), c + rng.normal(0, 0.05), rng.uniform(-50, 50)],
        [rng.uniform(-perspective, perspective), rng.uniform(-perspective, perspective), 1.0],
    ])
    return Homography(m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
