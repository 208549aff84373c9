#!/usr/bin/env python3
"""
Evaluation of abundance estimates
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from datamodel import AbundanceMatrix, MuaConfig
from errors import ShapeMismatch, UnmappedSignature, ZeroTruth

logger = logging.getLogger(__name__)

# sre() of a perfect estimate; kept as a float so result tables stay numeric
SRE_PERFECT = math.inf

CSV_COLUMNS = ['config_hash', 'transform', 'lambda_c', 'lambda', 'beta', 'region_size',
               'snr_db', 'sre_db', 'rmse', 'runtime_s']


@dataclass(frozen=True)
class EvalReport:
    sre_db: float
    rmse: float
    runtime_s: float
    config_echo: Optional[MuaConfig] = None
    method: str = 'mua'
    snr_db: Optional[float] = None
    context: Dict[str, object] = field(default_factory=dict)

    def as_row(self) -> dict:
        """One row of the results CSV"""
        cfg = self.config_echo
        return {
            'config_hash': config_hash(cfg, self.method, self.snr_db, **self.context),
            'transform': cfg.transform.value if cfg is not None and self.method == 'mua' else self.method,
            'lambda_c': cfg.lambda_c if cfg is not None and self.method == 'mua' else '',
            'lambda': cfg.lambda_ if cfg is not None else '',
            'beta': cfg.beta if cfg is not None and self.method == 'mua' else '',
            'region_size': cfg.region_size if cfg is not None and self.method == 'mua' else '',
            'snr_db': '' if self.snr_db is None else self.snr_db,
            'sre_db': self.sre_db,
            'rmse': self.rmse,
            'runtime_s': self.runtime_s,
        }


def config_hash(cfg: Optional[MuaConfig], method: str = 'mua', snr_db: Optional[float] = None, **extra) -> str:
    """12 hex characters identifying a configuration (plus any extra settings)"""
    items = {'method': method, 'snr_db': snr_db}
    if cfg is not None:
        items.update(cfg.echo())
    items.update(extra)
    canonical = ';'.join(f"{k}={items[k]!r}" for k in sorted(items))
    return hashlib.sha1(canonical.encode('utf-8')).hexdigest()[:12]


def _pair(truth: AbundanceMatrix, estimate: AbundanceMatrix) -> Tuple[np.ndarray, np.ndarray]:
    t, e = truth.values, estimate.values
    if t.shape != e.shape:
        raise ShapeMismatch(f"truth is {t.shape} but estimate is {e.shape}")
    return t, e


def sre(truth: AbundanceMatrix, estimate: AbundanceMatrix) -> float:
    """Signal-to-reconstruction error 10 log10(||X||^2 / ||X - X_hat||^2) in dB"""
    t, e = _pair(truth, estimate)
    signal = float(np.sum(t ** 2))
    if signal == 0:
        raise ZeroTruth("SRE is undefined for an all-zero ground truth")
    error = float(np.sum((t - e) ** 2))
    if error == 0:
        return SRE_PERFECT
    return 10.0 * math.log10(signal / error)


def rmse(truth: AbundanceMatrix, estimate: AbundanceMatrix) -> float:
    t, e = _pair(truth, estimate)
    return float(np.linalg.norm(t - e) / math.sqrt(t.size))


def aggregate_by_material(estimate: AbundanceMatrix, material_map: Sequence) -> Tuple[Tuple[str, ...], AbundanceMatrix]:
    """
    Sum the rows that belong to the same material and renormalize every pixel
    to sum to one (all-zero pixels stay zero). Rows come out in sorted
    material order, returned alongside.
    """
    values = estimate.values
    if material_map is None or len(material_map) != values.shape[0]:
        covered = 0 if material_map is None else len(material_map)
        raise UnmappedSignature(f"material map covers {covered} of {values.shape[0]} signatures")
    ids = [str(m) for m in material_map]
    if any(m in ('', 'None') for m in ids):
        raise UnmappedSignature("material map has signatures without a material")
    materials, index = np.unique(np.array(ids), return_inverse=True)
    summed = np.zeros((materials.size, values.shape[1]))
    np.add.at(summed, index, values)
    totals = summed.sum(axis=0, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    normalized = np.where(totals > 0, summed / safe, 0.0)
    return tuple(materials.tolist()), AbundanceMatrix(normalized)
