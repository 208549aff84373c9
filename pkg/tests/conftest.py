import os
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import linalg, optimize

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from datamodel import AbundanceMatrix, HyperspectralImage, SpectralLibrary  # noqa: E402
from solver import clear_factor_cache  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size scene comparisons, run with MUA_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.getenv('MUA_RUN_SLOW') == '1':
        return
    skip = pytest.mark.skip(reason="set MUA_RUN_SLOW=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def fresh_factor_cache():
    clear_factor_cache()
    yield
    clear_factor_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_library(rng):
    """20 bands x 10 signatures, entries in (0.05, 1)"""
    return SpectralLibrary(0.05 + 0.95 * rng.random((20, 10)))


def random_problem(seed: int, bands: int = 20, count: int = 10, pixels: int = 16):
    """Library, observation Y and a nonnegative prior"""
    r = np.random.default_rng(seed)
    library = SpectralLibrary(0.05 + 0.95 * r.random((bands, count)))
    truth = np.maximum(r.standard_normal((count, pixels)), 0.0)
    y = library.signatures @ truth + 0.05 * r.standard_normal((bands, pixels))
    prior = AbundanceMatrix(r.random((count, pixels)))
    return library, y, prior


def constant_image(rows: int, cols: int, spectrum) -> HyperspectralImage:
    spectrum = np.asarray(spectrum, dtype=np.float64)
    return HyperspectralImage(rows, cols, np.repeat(spectrum[:, np.newaxis], rows * cols, axis=1))


def nnls_oracle(y: np.ndarray, a: np.ndarray, lam: float, beta: float = 0.0, prior=None) -> np.ndarray:
    """
    Exact minimizer of 1/2||y - A x||^2 + lam sum(x) + beta/2 ||p - x||^2 over x >= 0,
    column by column, via an active-set NNLS on the Cholesky-whitened system.
    """
    p = a.shape[1]
    h = a.T @ a + beta * np.eye(p)
    r = linalg.cholesky(h, lower=False)
    out = np.zeros((p, y.shape[1]))
    for j in range(y.shape[1]):
        c = a.T @ y[:, j] - lam
        if prior is not None and beta > 0:
            c = c + beta * prior[:, j]
        target = linalg.solve_triangular(r, c, trans='T')
        out[:, j], _ = optimize.nnls(r, target)
    return out


def same_partition(a, b) -> bool:
    """True when two label arrays describe the same grouping up to renaming"""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))
