#!/usr/bin/env python3
"""
Parameter sweeps over synthetic scenes.

A sweep file lists value lists per key (see fileio.read_sweep_file); every
combination is one cell: generate library and scene, add noise, unmix, score.
Cells are independent and seeded, so they run in parallel threads and the
results CSV is sorted by config hash for stable content.
"""

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from joblib import Parallel, delayed

import config
from datamodel import AbundanceMatrix, HyperspectralImage, MuaConfig, SpectralLibrary
from errors import InvalidParameter
from fileio import expand_sweep, read_sweep_file, write_key_values, write_results
from metrics import EvalReport, rmse, sre
from pipeline import mua_unmix, sunsal_unmix
from synth import Dc1Params, Dc2Params, add_noise, generate_dc1, generate_dc2, generate_library

logger = logging.getLogger(__name__)

CELL_DEFAULTS = {
    'dataset': 'dc1',
    'method': 'mua',
    'bands': 224,
    'library_size': 240,
    'min_angle': 4.44,
    'library_seed': 0,
    'data_seed': 0,
    'snr_db': 20.0,
    'noise_seed': 0,
    'size': None,
    'transform': 'slic',
    'region_size': 6,
    'mu': config.ADMM_MU,
    'tol': config.ADMM_TOL,
    'max_iters': config.ADMM_MAX_ITERS,
    'adaptive_mu': config.ADMM_ADAPTIVE_MU,
    'seed': 0,
}

REGULARIZATION_KEYS = ('lambda_c', 'lambda', 'beta')

SCENE_KEYS = ('dataset', 'bands', 'library_size', 'min_angle', 'library_seed', 'data_seed', 'size', 'snr_db',
              'noise_seed')


@lru_cache(maxsize=8)
def cached_library(bands: int, count: int, min_angle: float, seed: int) -> SpectralLibrary:
    return generate_library(bands, count, min_angle, seed)


@lru_cache(maxsize=16)
def cached_scene(dataset: str, bands: int, count: int, min_angle: float, library_seed: int, data_seed: int,
                 size: Optional[int] = None) -> Tuple[SpectralLibrary, AbundanceMatrix, HyperspectralImage]:
    """Library plus (truth, clean image); size=None keeps the dataset's standard edge length"""
    library = cached_library(bands, count, min_angle, library_seed)
    extra = {} if size is None else {'size': size}
    if dataset == 'dc1':
        truth, clean = generate_dc1(library, Dc1Params(seed=data_seed, **extra))
    elif dataset == 'dc2':
        truth, clean = generate_dc2(library, Dc2Params(seed=data_seed, **extra))
    else:
        raise InvalidParameter(f"unknown dataset {dataset!r}; use dc1 or dc2")
    return library, truth, clean


def cell_config(settings: Dict[str, object]) -> MuaConfig:
    """MuaConfig for a cell; the baseline echoes lambda into lambda_c and uses beta = 0"""
    if 'lambda' not in settings:
        raise InvalidParameter("sweep cells need a lambda value")
    lam = float(settings['lambda'])
    mua = settings['method'] == 'mua'
    if mua and ('lambda_c' not in settings or 'beta' not in settings):
        raise InvalidParameter("mua sweep cells need lambda_c and beta values")
    return MuaConfig(
        lambda_c=float(settings['lambda_c']) if mua else lam,
        lambda_=lam,
        beta=float(settings['beta']) if mua else 0.0,
        mu=float(settings['mu']),
        transform=str(settings['transform']),
        region_size=int(settings['region_size']),
        max_iters=int(settings['max_iters']),
        tol=float(settings['tol']),
        seed=int(settings['seed']),
        adaptive_mu=bool(settings['adaptive_mu']),
    )


def run_cell(cell: Dict[str, object]) -> Tuple[dict, Dict[str, object]]:
    """Run one sweep combination; returns (CSV row, full settings)"""
    unknown = sorted(k for k in cell if k not in CELL_DEFAULTS and k not in REGULARIZATION_KEYS)
    if unknown:
        raise InvalidParameter(f"unknown sweep keys {unknown}; known keys are "
                               f"{sorted(list(CELL_DEFAULTS) + list(REGULARIZATION_KEYS))}")
    settings = {**CELL_DEFAULTS, **cell}
    method = str(settings['method'])
    if method not in ('mua', 'sunsal'):
        raise InvalidParameter(f"unknown method {method!r}; use mua or sunsal")
    cfg = cell_config(settings)
    library, truth, clean = cached_scene(
        str(settings['dataset']), int(settings['bands']), int(settings['library_size']),
        float(settings['min_angle']), int(settings['library_seed']), int(settings['data_seed']),
        None if settings['size'] is None else int(settings['size']),
    )
    snr_db = float(settings['snr_db'])
    noisy = add_noise(clean, snr_db, int(settings['noise_seed']))

    if method == 'sunsal':
        report = sunsal_unmix(noisy, library, cfg.lambda_, mu=cfg.mu, max_iters=cfg.max_iters, tol=cfg.tol,
                              adaptive_mu=cfg.adaptive_mu)
        estimate, runtime = report.abundances, report.wall_time
    else:
        result = mua_unmix(noisy, library, cfg)
        estimate, runtime = result.abundances, result.wall_time

    context = {k: settings[k] for k in SCENE_KEYS if k != 'snr_db'}
    evaluation = EvalReport(sre(truth, estimate), rmse(truth, estimate), runtime, cfg, method, snr_db, context)
    row = evaluation.as_row()
    logger.info(f"Cell {row['config_hash']}: {method} SRE {row['sre_db']:.2f} dB in {runtime:.2f}s")
    return row, settings


def best_row(rows: List[dict]) -> Optional[dict]:
    """Highest SRE; earliest row wins ties"""
    best = None
    for row in rows:
        value = row['sre_db']
        if math.isnan(value):
            continue
        if best is None or value > best['sre_db']:
            best = row
    return best


def run_sweep(cells: List[Dict[str, object]], out_path, workers: int = config.BENCH_WORKERS) -> List[dict]:
    """Run every cell (threads when workers > 1) and write the sorted CSV plus the best-row record"""
    if not cells:
        raise InvalidParameter("sweep has no cells")
    logger.info(f"Running {len(cells)} sweep cells on {max(workers, 1)} workers")
    if workers > 1:
        outcomes = Parallel(n_jobs=workers, prefer='threads')(delayed(run_cell)(c) for c in cells)
    else:
        outcomes = [run_cell(c) for c in cells]

    rows = [row for row, _ in outcomes]
    frame = write_results(out_path, rows)
    logger.info(f"Wrote {len(frame)} rows to {out_path}")

    best = best_row(rows)
    if best is not None:
        settings = next(s for r, s in outcomes if r is best)
        record = {**{f"setting.{k}": v for k, v in settings.items()}, **best}
        best_path = Path(str(out_path) + '.best.txt')
        write_key_values(best_path, record)
        logger.info(f"Best cell {best['config_hash']}: SRE {best['sre_db']:.2f} dB ({best_path})")
    return rows


def run_sweep_file(sweep_path, out_path, workers: int = config.BENCH_WORKERS) -> List[dict]:
    return run_sweep(expand_sweep(read_sweep_file(sweep_path)), out_path, workers)
