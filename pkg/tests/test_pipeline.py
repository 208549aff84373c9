import numpy as np
import pytest

from conftest import constant_image
from datamodel import HyperspectralImage, MuaConfig, SegmentMap, SpectralLibrary
from errors import BandMismatch, PixelCountMismatch
from metrics import sre
from pipeline import mua_unmix, sunsal_unmix
from synth import Dc1Params, Dc2Params, add_noise, generate_dc1, generate_dc2, generate_library
from transform import apply_w_conj


def _scene(seed: int, rows: int = 12, cols: int = 12, bands: int = 15, count: int = 8):
    r = np.random.default_rng(seed)
    library = SpectralLibrary(0.05 + 0.95 * r.random((bands, count)))
    x = np.zeros((count, rows * cols))
    x[r.integers(0, count, rows * cols), np.arange(rows * cols)] = 1.0
    y = library.signatures @ x + 0.01 * r.standard_normal((bands, rows * cols))
    return library, HyperspectralImage(rows, cols, y)


@pytest.mark.parametrize("seed", range(10))
def test_beta_zero_equals_sunsal(seed):
    library, image = _scene(seed)
    r = np.random.default_rng(100 + seed)
    lam = float(r.choice([0.001, 0.01, 0.1]))
    cfg = MuaConfig(lambda_c=float(r.choice([0.005, 0.03])), lambda_=lam, beta=0.0,
                    transform=str(r.choice(['slic', 'kmeans', 'grid'])), region_size=int(r.integers(2, 5)),
                    max_iters=300, adaptive_mu=bool(seed % 2))
    result = mua_unmix(image, library, cfg)
    baseline = sunsal_unmix(image, library, lam, mu=cfg.mu, max_iters=cfg.max_iters, tol=cfg.tol,
                            adaptive_mu=cfg.adaptive_mu)
    np.testing.assert_array_equal(result.abundances.values, baseline.abundances.values)


def test_result_invariants():
    library, image = _scene(1)
    cfg = MuaConfig(lambda_c=0.01, lambda_=0.01, beta=5.0, region_size=3, max_iters=300)
    result = mua_unmix(image, library, cfg)
    np.testing.assert_array_equal(result.prior.values, apply_w_conj(result.coarse_abundances, result.segment_map))
    assert np.all(result.abundances.values >= 0.0)
    assert result.coarse_abundances.shape == (library.count, result.segment_map.segment_count)
    for k in range(result.segment_map.segment_count):
        cols = result.prior.values[:, result.segment_map.labels == k]
        assert np.all(cols == cols[:, :1])
    assert result.wall_time >= result.coarse_report.wall_time + result.fine_report.wall_time


def test_mua_is_deterministic():
    library, image = _scene(2)
    cfg = MuaConfig(lambda_c=0.01, lambda_=0.01, beta=5.0, transform='kmeans', region_size=3, max_iters=200, seed=3)
    a = mua_unmix(image, library, cfg)
    b = mua_unmix(image, library, cfg)
    np.testing.assert_array_equal(a.abundances.values, b.abundances.values)
    np.testing.assert_array_equal(a.segment_map.labels, b.segment_map.labels)


def test_single_segment_on_constant_image_collapses_scales():
    r = np.random.default_rng(6)
    library = SpectralLibrary(0.05 + 0.95 * r.random((12, 4)))
    x = np.array([0.6, 0.0, 0.4, 0.0])
    image = constant_image(4, 4, library.signatures @ x)
    seg = SegmentMap(np.zeros(16, dtype=int))
    cfg = MuaConfig(lambda_c=1e-6, lambda_=1e-6, beta=1.0, mu=0.5, max_iters=20000, tol=1e-10)
    result = mua_unmix(image, library, cfg, segment_map=seg)
    assert result.segment_map is seg
    expected = np.repeat(x[:, np.newaxis], 16, axis=1)
    assert np.max(np.abs(result.abundances.values - expected)) <= 1e-3
    assert np.max(np.abs(result.coarse_abundances[:, 0] - x)) <= 1e-3


def test_segment_map_must_cover_image():
    library, image = _scene(3)
    cfg = MuaConfig(lambda_c=0.01, lambda_=0.01, beta=1.0, region_size=3)
    with pytest.raises(PixelCountMismatch):
        mua_unmix(image, library, cfg, segment_map=SegmentMap(np.array([0, 0, 1])))


def test_band_mismatch_propagates():
    library, image = _scene(4)
    other = SpectralLibrary(np.full((image.bands + 1, 3), 0.5))
    with pytest.raises(BandMismatch):
        sunsal_unmix(image, other, 0.1)


def test_sunsal_recovers_consistent_system():
    r = np.random.default_rng(7)
    library = SpectralLibrary(0.05 + 0.95 * r.random((20, 5)))
    x = r.random((5, 9))
    image = HyperspectralImage(3, 3, library.signatures @ x)
    report = sunsal_unmix(image, library, 1e-9, mu=0.5, max_iters=20000, tol=1e-12)
    np.testing.assert_allclose(report.abundances.values, x, atol=1e-4)


# Full-size libraries are too coherent for a fixed mu = 0.01 to converge in a
# reasonable budget; residual balancing from mu = 0.5 does, at tol 1e-4.
ACCEPTANCE_SOLVER = {'mu': 0.5, 'tol': 1e-4, 'max_iters': 3000, 'adaptive_mu': True}


def _gap(dataset: str, mua_cfg: MuaConfig, sunsal_lambda: float, noise_seeds=(0, 1, 2)):
    library = generate_library(224, 240, 4.44, seed=0)
    if dataset == 'dc1':
        truth, clean = generate_dc1(library, Dc1Params(seed=1))
    else:
        truth, clean = generate_dc2(library, Dc2Params(seed=1))
    gaps, ratios = [], []
    for seed in noise_seeds:
        noisy = add_noise(clean, 20.0, seed)
        mua = mua_unmix(noisy, library, mua_cfg)
        base = sunsal_unmix(noisy, library, sunsal_lambda, mu=mua_cfg.mu, max_iters=mua_cfg.max_iters,
                            tol=mua_cfg.tol, adaptive_mu=mua_cfg.adaptive_mu)
        assert mua.coarse_report.converged and mua.fine_report.converged
        assert base.converged
        gaps.append(sre(truth, mua.abundances) - sre(truth, base.abundances))
        ratios.append(mua.wall_time / base.wall_time)
    return float(np.mean(gaps)), ratios


@pytest.mark.slow
def test_dc1_multiscale_beats_baseline():
    cfg = MuaConfig(lambda_c=0.03, lambda_=0.1, beta=30.0, transform='slic', region_size=6, **ACCEPTANCE_SOLVER)
    gap, _ = _gap('dc1', cfg, 0.7)
    assert gap >= 3.0


@pytest.mark.slow
def test_dc2_multiscale_beats_baseline():
    cfg = MuaConfig(lambda_c=0.007, lambda_=0.1, beta=10.0, transform='slic', region_size=8, **ACCEPTANCE_SOLVER)
    gap, _ = _gap('dc2', cfg, 0.1)
    assert gap >= 3.0


@pytest.mark.slow
def test_multiscale_runtime_comparable_to_baseline():
    cfg = MuaConfig(lambda_c=0.03, lambda_=0.1, beta=30.0, transform='slic', region_size=6, **ACCEPTANCE_SOLVER)
    _, ratios = _gap('dc1', cfg, 0.7, noise_seeds=(0,))
    assert ratios[0] <= 2.0
