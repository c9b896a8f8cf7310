import numpy as np
import pytest

from recogsheet import datasets as D


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return D.SynthSpec(
        num_classes=6,
        num_categories=3,
        dim=16,
        frames_per_session=30,
        num_days=2,
        seed=7,
    )


@pytest.fixture(scope="session")
def small_ds(small_spec):
    return D.synth_generate(small_spec)


def random_problem(rng, n, d, T):
    X = rng.normal(size=(n, d))
    y = rng.integers(0, T, size=n)
    y[:T] = np.arange(T)
    return X, y


def dense_ridge(X, y, T, lam):
    """Reference solution via a generic dense solve of the normal equations."""
    Y = -np.ones((len(y), T))
    Y[np.arange(len(y)), y] = 1.0
    return np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ Y)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
