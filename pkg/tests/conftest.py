import numpy as np
import pytest

from dtirc.state_space import DiscreteStateSpace, minimality


def random_spd(rng, n, lo=0.5, hi=5.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def sqrtm_spd(P):
    w, V = np.linalg.eigh(P)
    return (V * np.sqrt(w)) @ V.T


def random_ni_plant(rng, n, p, contraction=0.95, sample_period=None):
    """Minimal plant built so that P satisfies the NI certificate conditions exactly.

    A = P^-1/2 K P^1/2 with ||K|| < 1 gives A'PA - P < 0; C is then
    defined from the equality condition.  Returns (plant, P).
    """
    while True:
        P = random_spd(rng, n)
        K = rng.standard_normal((n, n))
        K *= rng.uniform(0.3, contraction) / np.linalg.norm(K, 2)
        S = sqrtm_spd(P)
        A = np.linalg.solve(S, K @ S)
        B = rng.standard_normal((n, p))
        C = B.T @ np.linalg.solve((np.eye(n) - A).T, P)
        sys = DiscreteStateSpace(A, B, C, sample_period)
        if all(minimality(sys)):
            return sys, P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar_plant():
    return DiscreteStateSpace([[0.5]], [[1.0]], [[0.5]], 1.0)


# --- acceptance summary --------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    num, title = marker.args
    _ACCEPTANCE[num] = (title, rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}")
