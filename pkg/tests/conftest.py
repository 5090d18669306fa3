from __future__ import annotations

import mpmath
import numpy as np
import pytest

from floquet_transfer.floquet import measured_peaks

mpmath.mp.dps = 30

# Independent oracle: halved Bessel zeros from mpmath at 30 digits.
HALF_J1_ZEROS = np.array([float(mpmath.besseljzero(1, k) / 2) for k in range(1, 8)])
HALF_J0_ZEROS = np.array([float(mpmath.besseljzero(0, k) / 2) for k in range(1, 8)])

# Gap maxima of the omega = delta = 1 spectrum, golden-section refined at
# 16384 steps per period.
MEASURED_PEAKS = np.array([1.81350, 3.44031, 5.03531, 6.61989, 8.19968, 9.77684])


@pytest.fixture(scope="session")
def peaks():
    """Measured gap maxima of the omega = delta = 1 spectrum."""
    return measured_peaks(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One line per acceptance criterion, filled in by test_acceptance.py and
# printed after the run so it shows up even with output capture on.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
