"""Shared helpers for the test suite."""

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")


def random_pd(rng, g, lo=0.5, hi=10.0):
    """Random symmetric matrix with eigenvalues uniform in [lo, hi]."""
    q, _ = np.linalg.qr(rng.normal(size=(g, g)))
    return (q * rng.uniform(lo, hi, g)) @ q.T


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed again in the terminal summary so
# the verdicts are visible without -s
ACCEPTANCE = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
