import numpy as np
import pytest

from fosr.data import McmcConfig
from fosr.gibbs import run_gibbs
from fosr.simulate import generate_dataset


def mc_se(x: np.ndarray, batches: int = 50) -> float:
    """Batch-means standard error of the mean of a (possibly autocorrelated) series."""
    x = np.asarray(x, dtype=float)
    b = x[: x.size // batches * batches].reshape(batches, -1).mean(axis=1)
    return float(b.std(ddof=1) / np.sqrt(batches))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture(scope="session")
def small_data():
    return generate_dataset(n=30, m=20, p=5, p1=2, seed=11)


@pytest.fixture(scope="session")
def small_archive(small_data):
    data, _ = small_data
    return run_gibbs(data, McmcConfig(K=3, n_iter=300, burn_in=100, thin=2, seed=5))


def toy_archive(F, A, mu=None, sigma_eps=None, sigma_gamma=None, n=None, scale=None, names=None):
    """DrawArchive built directly from arrays; F is (S, m, K) and A is (S, K, p)."""
    from fosr.data import DrawArchive, Standardization

    F, A = np.asarray(F, float), np.asarray(A, float)
    S, m, K = F.shape
    p = A.shape[2]
    n = n or 5
    return DrawArchive(
        F=F, A=A,
        mu=np.zeros((S, K)) if mu is None else np.asarray(mu, float),
        Gamma=np.zeros((S, K, n)),
        sigma_eps=np.ones(S) if sigma_eps is None else np.asarray(sigma_eps, float),
        sigma_gamma=np.ones((S, K, n)) if sigma_gamma is None else np.asarray(sigma_gamma, float),
        Y_imputed=np.zeros((S, 0)),
        iter_seconds=np.zeros(S),
        tau=np.linspace(0, 1, m),
        missing_index=np.zeros(0, int),
        standardization=Standardization(np.zeros(p), np.ones(p) if scale is None else np.asarray(scale, float)),
        predictor_names=tuple(names or (f"x{j + 1}" for j in range(p))),
        seed=0, thin=1, burn_in=0, n_iter=S,
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
