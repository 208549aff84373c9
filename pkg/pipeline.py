#!/usr/bin/env python3
"""
Multiscale sparse unmixing end to end, plus the unregularized baseline.

    1. segment Y and average it per segment         Y_C = Y W
    2. unmix the coarse image (beta = 0)            X_C
    3. broadcast back to the pixel grid             X_D = X_C W*
    4. unmix Y pulled towards X_D with weight beta  X
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

import config
from datamodel import AbundanceMatrix, HyperspectralImage, MuaConfig, SegmentMap, SpectralLibrary, validate_pair
from errors import PixelCountMismatch
from solver import SolveReport, admm_solve
from transform import apply_w, apply_w_conj, build_segment_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MuaResult:
    abundances: AbundanceMatrix
    coarse_abundances: np.ndarray
    prior: AbundanceMatrix
    segment_map: SegmentMap
    coarse_report: SolveReport
    fine_report: SolveReport
    segment_time: float = 0.0

    @property
    def wall_time(self) -> float:
        return self.segment_time + self.coarse_report.wall_time + self.fine_report.wall_time


def mua_unmix(image: HyperspectralImage, library: SpectralLibrary, cfg: MuaConfig,
              segment_map: Optional[SegmentMap] = None) -> MuaResult:
    """Run the four multiscale stages; a precomputed segment_map skips stage 1"""
    validate_pair(image, library)
    started = time.perf_counter()
    if segment_map is None:
        segment_map = build_segment_map(image, cfg)
    elif segment_map.pixels != image.pixels:
        raise PixelCountMismatch(f"segment map covers {segment_map.pixels} pixels, image has {image.pixels}")
    segment_time = time.perf_counter() - started
    logger.info(f"MUA: {cfg.transform.value} gave K={segment_map.segment_count} segments for N={image.pixels}")

    coarse_image = apply_w(image.data, segment_map)
    coarse_report = admm_solve(coarse_image, library, cfg.lambda_c, beta=0.0, prior=None,
                               mu=cfg.mu, max_iters=cfg.max_iters, tol=cfg.tol,
                               adaptive_mu=cfg.adaptive_mu)
    coarse = np.array(coarse_report.abundances.values)
    prior = AbundanceMatrix(apply_w_conj(coarse, segment_map))

    fine_report = admm_solve(image.data, library, cfg.lambda_, beta=cfg.beta,
                             prior=prior if cfg.beta > 0 else None,
                             mu=cfg.mu, max_iters=cfg.max_iters, tol=cfg.tol,
                             adaptive_mu=cfg.adaptive_mu)
    result = MuaResult(
        abundances=fine_report.abundances,
        coarse_abundances=coarse,
        prior=prior,
        segment_map=segment_map,
        coarse_report=coarse_report,
        fine_report=fine_report,
        segment_time=segment_time,
    )
    logger.info(
        f"MUA done in {result.wall_time:.2f}s (segment {segment_time:.2f}s, coarse "
        f"{coarse_report.iterations} it, fine {fine_report.iterations} it)"
    )
    return result


def sunsal_unmix(image: HyperspectralImage, library: SpectralLibrary, lam: float,
                 mu: float = config.ADMM_MU, max_iters: int = config.ADMM_MAX_ITERS,
                 tol: float = config.ADMM_TOL, adaptive_mu: bool = config.ADMM_ADAPTIVE_MU) -> SolveReport:
    """Pixel-wise sparse unmixing without spatial regularization"""
    validate_pair(image, library)
    return admm_solve(image.data, library, lam, beta=0.0, prior=None, mu=mu, max_iters=max_iters, tol=tol,
                      adaptive_mu=adaptive_mu)
