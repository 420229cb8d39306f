import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("pkg", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def orth(rng, p, k):
    Q, _ = np.linalg.qr(rng.standard_normal((p, k)))
    return Q


def sin_theta(a, b):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(np.sqrt(max(0.0, 1.0 - (a @ b) ** 2)))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    def _add(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return _add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
