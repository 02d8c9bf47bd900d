import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_complex(rng, dim):
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def random_operator(rng, dim, scale=1.0):
    """Random dense complex matrix with spectral norm ``scale``."""
    m = random_complex(rng, dim)
    return m * (scale / np.linalg.norm(m, 2))


def random_unitary(rng, dim):
    q, r = np.linalg.qr(random_complex(rng, dim))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::test_criterion_" in nodeid:
                name = nodeid.split("::test_criterion_")[-1]
                num, _, label = name.partition("_")
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append((int(num), f"criterion {int(num):2d} [{label}]: {verdict}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
