#!/usr/bin/env python3
"""
Synthetic data for unmixing experiments: a bump-spectrum library with a
minimum pairwise spectral angle, the DC1 (squares on a background) and DC2
(Dirichlet over Gaussian random fields) abundance cubes, and white Gaussian
noise at a target SNR. Every generator is deterministic in its seed.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import distance

from datamodel import AbundanceMatrix, HyperspectralImage, SpectralLibrary
from errors import GenerationExhausted, InvalidParameter, ShapeMismatch, SquaresDontFit, ZeroSpectrum

logger = logging.getLogger(__name__)

REFLECTANCE_FLOOR = 0.01


@dataclass(frozen=True)
class Dc1Params:
    size: int = 75
    endmembers: int = 5
    square_size: int = 9
    rows_of_squares: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.size < 1 or self.endmembers < 1 or self.square_size < 1 or self.rows_of_squares < 1:
            raise InvalidParameter("DC1 size, endmembers, square_size and rows_of_squares must be >= 1")


@dataclass(frozen=True)
class Dc2Params:
    size: int = 100
    endmembers: int = 9
    field_correlation_length: float = 8.0
    dirichlet_concentration: float = 500.0
    sharpness: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.size < 1 or self.endmembers < 1:
            raise InvalidParameter("DC2 size and endmembers must be >= 1")
        if self.field_correlation_length < 0:
            raise InvalidParameter("field_correlation_length must be >= 0")
        if not self.dirichlet_concentration > 0:
            raise InvalidParameter("dirichlet_concentration must be > 0")


def spectral_angle(a, b) -> float:
    """Angle between two spectra in degrees, in [0, 180]; exactly 0 for parallel spectra"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"spectra have different lengths: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroSpectrum("spectral angle is undefined for an all-zero spectrum")
    ua, ub = a / na, b / nb
    return math.degrees(2.0 * math.atan2(float(np.linalg.norm(ua - ub)), float(np.linalg.norm(ua + ub))))


def pairwise_min_angle(signatures: np.ndarray) -> float:
    """Smallest angle (degrees) between any two columns; 180 for a single column"""
    if signatures.shape[1] < 2:
        return 180.0
    unit = signatures / np.linalg.norm(signatures, axis=0)
    chord = distance.pdist(unit.T)
    angles = 2.0 * np.arctan2(chord, np.sqrt(np.maximum(4.0 - chord ** 2, 0.0)))
    return math.degrees(float(angles.min()))


def _bump_spectrum(bands: int, rng: np.random.Generator) -> np.ndarray:
    axis = np.arange(bands, dtype=np.float64)
    spectrum = np.zeros(bands)
    for _ in range(int(rng.integers(3, 9))):
        centre = rng.uniform(0, bands)
        width = rng.uniform(max(bands / 40.0, 0.5), max(bands / 4.0, 1.0))
        height = rng.uniform(0.05, 0.6)
        spectrum += height * np.exp(-0.5 * ((axis - centre) / width) ** 2)
    return np.clip(spectrum, REFLECTANCE_FLOOR, 1.0)


def generate_library(bands: int, count: int, min_angle_deg: float, seed: int) -> SpectralLibrary:
    """
    Rejection-sample smooth reflectance spectra (3-8 Gaussian bumps, clipped to
    [0.01, 1]) until `count` of them are pairwise at least min_angle_deg apart.
    """
    if bands < 1 or count < 1:
        raise InvalidParameter(f"bands and count must be >= 1, got {bands}, {count}")
    if min_angle_deg < 0:
        raise InvalidParameter(f"min_angle_deg must be >= 0, got {min_angle_deg}")
    rng = np.random.default_rng(seed)
    cos_limit = math.cos(math.radians(min(min_angle_deg, 180.0)))
    accepted = np.empty((bands, count))
    units = np.empty((bands, count))
    have = 0
    rejections = 0
    while have < count:
        candidate = _bump_spectrum(bands, rng)
        unit = candidate / np.linalg.norm(candidate)
        if have and float(np.max(units[:, :have].T @ unit)) > cos_limit:
            rejections += 1
            if rejections >= 100 * count:
                raise GenerationExhausted(
                    f"{rejections} consecutive rejections with {have}/{count} spectra at {min_angle_deg} degrees"
                )
            continue
        accepted[:, have] = candidate
        units[:, have] = unit
        have += 1
        rejections = 0
    logger.info(f"Generated library: {bands} bands x {count} signatures, min angle {min_angle_deg} deg")
    return SpectralLibrary(accepted)


def _pick_endmembers(library: SpectralLibrary, endmembers: int, rng: np.random.Generator) -> np.ndarray:
    if endmembers > library.count:
        raise InvalidParameter(f"need {endmembers} endmembers but the library has {library.count} signatures")
    return rng.choice(library.count, size=endmembers, replace=False)


def _scene(library: SpectralLibrary, fractions: np.ndarray, picked: np.ndarray,
           rows: int, cols: int) -> Tuple[AbundanceMatrix, HyperspectralImage]:
    """Embed E x N fractions into library space and mix them"""
    x = np.zeros((library.count, rows * cols))
    x[picked] = fractions
    return AbundanceMatrix(x), HyperspectralImage(rows, cols, library.signatures @ x)


def generate_dc1(library: SpectralLibrary, params: Dc1Params) -> Tuple[AbundanceMatrix, HyperspectralImage]:
    """
    Squares over a uniformly mixed background, laid out on a uniform grid.

    Row r of squares uses endmember r (mod E): pure, then 75/25, 50/50 and
    25/75 mixtures with the background, then a 50/50 mix with endmember r+1.
    """
    rng = np.random.default_rng(params.seed)
    picked = _pick_endmembers(library, params.endmembers, rng)
    e = params.endmembers
    per_row = 5
    size, sq = params.size, params.square_size
    gap_x = (size - per_row * sq) // (per_row + 1)
    gap_y = (size - params.rows_of_squares * sq) // (params.rows_of_squares + 1)
    if gap_x < 0 or gap_y < 0:
        raise SquaresDontFit(
            f"{params.rows_of_squares} x {per_row} squares of {sq} px do not fit in {size} x {size}"
        )

    background = np.full(e, 1.0 / e)
    fractions = np.repeat(background[:, np.newaxis], size * size, axis=1)
    grid = fractions.reshape(e, size, size)
    for r in range(params.rows_of_squares):
        j = r % e
        pure = np.zeros(e)
        pure[j] = 1.0
        partner = np.zeros(e)
        partner[(j + 1) % e] = 1.0
        compositions = [pure] + [f * pure + (1.0 - f) * background for f in (0.75, 0.5, 0.25)]
        compositions.append(0.5 * pure + 0.5 * partner)
        y0 = gap_y + r * (sq + gap_y)
        for c, comp in enumerate(compositions):
            x0 = gap_x + c * (sq + gap_x)
            grid[:, y0:y0 + sq, x0:x0 + sq] = comp[:, np.newaxis, np.newaxis]

    logger.info(f"DC1: {size}x{size}, endmembers {sorted(picked.tolist())}")
    return _scene(library, grid.reshape(e, -1), picked, size, size)


def _dc2_mean(library: SpectralLibrary, params: Dc2Params):
    """Pick endmembers and build the softmax mean field; returns (rng, picked, E x N mean)"""
    rng = np.random.default_rng(params.seed)
    picked = _pick_endmembers(library, params.endmembers, rng)
    size, e = params.size, params.endmembers

    fields = rng.standard_normal((e, size, size))
    if params.field_correlation_length > 0:
        for i in range(e):
            fields[i] = ndimage.gaussian_filter(fields[i], sigma=params.field_correlation_length, mode='wrap')
    flat = fields.reshape(e, -1)
    std = flat.std(axis=1)
    std[std == 0] = 1.0
    logits = params.sharpness * (flat - flat.mean(axis=1, keepdims=True)) / std[:, np.newaxis]
    logits -= logits.max(axis=0, keepdims=True)
    mean = np.exp(logits)
    mean /= mean.sum(axis=0, keepdims=True)
    return rng, picked, mean


def generate_dc2(library: SpectralLibrary, params: Dc2Params) -> Tuple[AbundanceMatrix, HyperspectralImage]:
    """
    Per-pixel Dirichlet abundances whose mean is the softmax of independent
    Gaussian random fields (white noise smoothed by an isotropic Gaussian of
    the correlation length), scaled by the concentration.
    """
    rng, picked, mean = _dc2_mean(library, params)
    gamma = rng.standard_gamma(params.dirichlet_concentration * mean)
    totals = gamma.sum(axis=0, keepdims=True)
    # an all-underflow draw is replaced by its mean
    empty = totals[0] == 0
    if np.any(empty):
        gamma[:, empty] = mean[:, empty]
        totals[0, empty] = 1.0
    fractions = gamma / totals

    logger.info(f"DC2: {params.size}x{params.size}, endmembers {sorted(picked.tolist())}, "
                f"corr {params.field_correlation_length}, concentration {params.dirichlet_concentration}")
    return _scene(library, fractions, picked, params.size, params.size)


def dc2_mean_field(library: SpectralLibrary, params: Dc2Params) -> np.ndarray:
    """The Dirichlet mean the DC2 sampler draws around, in library space (P x N)"""
    _, picked, mean = _dc2_mean(library, params)
    x = np.zeros((library.count, params.size * params.size))
    x[picked] = mean
    return x


def add_noise(image: HyperspectralImage, snr_db: float, seed: int) -> HyperspectralImage:
    """
    Add white Gaussian noise with variance ||Y||_F^2 / (L N 10^(snr/10)).
    snr_db = +inf returns the image unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return HyperspectralImage(image.rows, image.cols, image.data)
    signal_power = float(np.sum(image.data ** 2)) / image.data.size
    sigma = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noisy = image.data + sigma * rng.standard_normal(image.data.shape)
    logger.info(f"Added noise at {snr_db} dB (sigma={sigma:.4g})")
    return HyperspectralImage(image.rows, image.cols, noisy)
