import numpy as np
import pytest


def random_hpd(rng, M, cond=100.0):
    """Hermitian positive-definite matrix with a prescribed condition number."""
    Z = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    Q, _ = np.linalg.qr(Z)
    eig = np.geomspace(1.0, cond, M) if M > 1 else np.ones(1)
    R = (Q * eig) @ Q.conj().T
    return 0.5 * (R + R.conj().T)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
