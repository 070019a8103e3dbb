from dataclasses import dataclass

import numpy as np
import pytest

from dade.calibration import calibrate
from dade.io import SyntheticConfig, compute_ground_truth, generate_synthetic
from dade.transform import apply_transform, fit_pca, fit_random_orthogonal


@dataclass
class Prepared:
    raw: np.ndarray
    queries: np.ndarray
    pca: object
    rand: object
    x_pca: np.ndarray
    q_pca: np.ndarray
    x_rand: np.ndarray
    q_rand: np.ndarray

    @property
    def dim(self):
        return self.raw.shape[1]


def prepare(cfg: SyntheticConfig) -> Prepared:
    raw, queries = generate_synthetic(cfg)
    pca = fit_pca(raw)
    rand = fit_random_orthogonal(cfg.dim, cfg.seed + 1, raw)
    return Prepared(raw, queries, pca, rand, apply_transform(pca, raw), apply_transform(pca, queries),
                    apply_transform(rand, raw), apply_transform(rand, queries))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def aniso64():
    """D=64, component variances proportional to 1/k."""
    return prepare(SyntheticConfig(n=10_000, n_queries=200, dim=64, decay=1.0, seed=11))


@pytest.fixture(scope="session")
def aniso128():
    """D=128, component variances proportional to 1/k; the standard search dataset."""
    return prepare(SyntheticConfig(n=10_000, n_queries=50, dim=128, decay=1.0, seed=0))


@pytest.fixture(scope="session")
def aniso128_truth(aniso128):
    return compute_ground_truth(aniso128.raw, aniso128.queries, 10)


@pytest.fixture(scope="session")
def aniso128_cal(aniso128):
    return calibrate(aniso128.pca, aniso128.x_pca, 0.1, 32, seed=0)


@pytest.fixture(scope="session")
def small():
    """N=1,000, D=32 for exhaustive-equivalence checks."""
    return prepare(SyntheticConfig(n=1_000, n_queries=10, dim=32, decay=1.0, seed=3))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one acceptance line, then asserts ``ok``."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
