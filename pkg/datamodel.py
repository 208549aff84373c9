#!/usr/bin/env python3
"""
Core value types shared by the segmentation, solver, synthesis and file modules.

Conventions used everywhere:
- pixels are linearized row-major (row index varies slowest)
- images are L x N, abundances are P x N (one column per pixel)
- every array is float64 and read-only once wrapped in one of these types
"""

import enum
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

import config
from errors import BandMismatch, InvalidParameter, ShapeMismatch

logger = logging.getLogger(__name__)


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    """Copy into a read-only array of the given dtype"""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class HyperspectralImage:
    """Observed reflectance cube Y stored as an L x N matrix"""
    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_array(self.data)
        if data.ndim != 2:
            raise ShapeMismatch(f"image data must be 2-D (bands x pixels), got {data.ndim}-D")
        if self.rows < 1 or self.cols < 1 or data.shape[0] < 1:
            raise ShapeMismatch(f"image needs rows, cols, bands >= 1, got {self.rows}x{self.cols}x{data.shape[0]}")
        if data.shape[1] != self.rows * self.cols:
            raise ShapeMismatch(
                f"image data has {data.shape[1]} columns, expected rows*cols = {self.rows * self.cols}"
            )
        object.__setattr__(self, 'data', data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_cube(cls, cube: np.ndarray) -> 'HyperspectralImage':
        """Build from a rows x cols x bands array"""
        cube = np.asarray(cube, dtype=np.float64)
        if cube.ndim != 3:
            raise ShapeMismatch(f"cube must be rows x cols x bands, got shape {cube.shape}")
        rows, cols, bands = cube.shape
        return cls(rows, cols, cube.reshape(rows * cols, bands).T)

    def as_cube(self) -> np.ndarray:
        """Return the rows x cols x bands view of the data"""
        return self.data.T.reshape(self.rows, self.cols, self.bands)


@dataclass(frozen=True, eq=False)
class SpectralLibrary:
    """Candidate endmember signatures A (L x P), optionally tagged with materials"""
    signatures: np.ndarray
    material_map: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        sig = _frozen_array(self.signatures)
        if sig.ndim != 2 or sig.shape[0] < 1 or sig.shape[1] < 1:
            raise ShapeMismatch(f"library must be a non-empty bands x signatures matrix, got shape {sig.shape}")
        if not np.all(np.isfinite(sig)) or sig.min() < 0.0 or sig.max() > 1.0:
            raise InvalidParameter("library signature entries must lie in [0, 1]")
        zero_cols = np.flatnonzero(~np.any(sig != 0.0, axis=0))
        if zero_cols.size:
            raise InvalidParameter(f"library has all-zero signature columns: {zero_cols.tolist()}")
        object.__setattr__(self, 'signatures', sig)
        if self.material_map is not None:
            materials = tuple(str(m) for m in self.material_map)
            if len(materials) != sig.shape[1]:
                raise ShapeMismatch(f"material_map has {len(materials)} entries for {sig.shape[1]} signatures")
            object.__setattr__(self, 'material_map', materials)

    @property
    def bands(self) -> int:
        return self.signatures.shape[0]

    @property
    def count(self) -> int:
        return self.signatures.shape[1]

    @property
    def fingerprint(self) -> str:
        """Content hash, used to key cached factorizations"""
        return hashlib.sha1(self.signatures.tobytes() + str(self.signatures.shape).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class AbundanceMatrix:
    """Fractional abundances X (P x N)"""
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise ShapeMismatch(f"abundances must be 2-D (signatures x pixels), got {values.ndim}-D")
        object.__setattr__(self, 'values', values)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def pixels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class SegmentMap:
    """Assignment of N pixels to K segments; defines the operator pair W / W*"""
    labels: np.ndarray
    sizes: np.ndarray = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size < 1:
            raise ShapeMismatch("segment labels must be a non-empty 1-D array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise InvalidParameter("segment labels must be integers")
        labels = _frozen_array(labels, dtype=np.int64)
        if labels.min() < 0:
            raise InvalidParameter("segment labels must be >= 0")
        sizes = np.bincount(labels)
        if np.any(sizes == 0):
            raise InvalidParameter("segment labels must be dense: every id in [0, K) needs a pixel")
        if sizes.size >= labels.size:
            raise InvalidParameter(f"segment count K={sizes.size} must be below pixel count N={labels.size}")
        sizes.flags.writeable = False
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'sizes', sizes)

    @classmethod
    def from_labels(cls, labels: Sequence[int], allow_identity: bool = False) -> 'SegmentMap':
        """Renumber an arbitrary label array densely (ids ordered by value)"""
        _, dense = np.unique(np.asarray(labels).ravel(), return_inverse=True)
        if allow_identity:
            return cls._unchecked(dense.astype(np.int64))
        return cls(dense.astype(np.int64))

    @classmethod
    def identity(cls, pixels: int) -> 'SegmentMap':
        """One segment per pixel (K = N); W and W* both reduce to the identity"""
        return cls._unchecked(np.arange(pixels, dtype=np.int64))

    @classmethod
    def _unchecked(cls, dense: np.ndarray) -> 'SegmentMap':
        # Skips the K < N rule, which the identity/singleton segmentations break on purpose
        obj = object.__new__(cls)
        labels = _frozen_array(dense, dtype=np.int64)
        sizes = np.bincount(labels)
        if np.any(sizes == 0):
            raise InvalidParameter("segment labels must be dense")
        sizes.flags.writeable = False
        object.__setattr__(obj, 'labels', labels)
        object.__setattr__(obj, 'sizes', sizes)
        return obj

    @property
    def pixels(self) -> int:
        return self.labels.size

    @property
    def segment_count(self) -> int:
        return self.sizes.size


class Transform(str, enum.Enum):
    SLIC = 'slic'
    KMEANS = 'kmeans'
    GRID = 'grid'


@dataclass(frozen=True)
class MuaConfig:
    """All tuning knobs of a multiscale unmixing run"""
    lambda_c: float
    lambda_: float
    beta: float
    mu: float = config.ADMM_MU
    transform: Transform = Transform.SLIC
    region_size: int = 6
    max_iters: int = config.ADMM_MAX_ITERS
    tol: float = config.ADMM_TOL
    seed: int = 0
    compactness: Optional[float] = None
    slic_iters: int = config.SLIC_ITERS
    kmeans_iters: int = config.KMEANS_ITERS
    adaptive_mu: bool = config.ADMM_ADAPTIVE_MU

    def __post_init__(self):
        try:
            object.__setattr__(self, 'transform', Transform(self.transform))
        except ValueError:
            raise InvalidParameter(f"unknown transform {self.transform!r}; use slic, kmeans or grid")
        if not self.lambda_c > 0:
            raise InvalidParameter(f"lambda_c must be > 0, got {self.lambda_c}")
        if not self.lambda_ > 0:
            raise InvalidParameter(f"lambda must be > 0, got {self.lambda_}")
        if not self.beta >= 0:
            raise InvalidParameter(f"beta must be >= 0, got {self.beta}")
        if not self.mu > 0:
            raise InvalidParameter(f"mu must be > 0, got {self.mu}")
        if not self.tol > 0:
            raise InvalidParameter(f"tol must be > 0, got {self.tol}")
        if self.region_size < 2:
            raise InvalidParameter(f"region_size must be >= 2, got {self.region_size}")
        if self.max_iters < 1 or self.slic_iters < 1 or self.kmeans_iters < 1:
            raise InvalidParameter("iteration counts must be >= 1")
        if self.compactness is not None and self.compactness < 0:
            raise InvalidParameter(f"compactness must be >= 0, got {self.compactness}")

    def check_pixels(self, pixels: int) -> None:
        """Validate the image-dependent rule region_size^2 < N"""
        if self.region_size ** 2 >= pixels:
            raise InvalidParameter(f"region_size^2 = {self.region_size ** 2} must be below N = {pixels}")

    def echo(self) -> dict:
        """Flat, serializable view used in run reports and CSV rows"""
        return {
            'lambda_c': self.lambda_c,
            'lambda': self.lambda_,
            'beta': self.beta,
            'mu': self.mu,
            'transform': self.transform.value,
            'region_size': self.region_size,
            'max_iters': self.max_iters,
            'tol': self.tol,
            'seed': self.seed,
            'compactness': self.compactness,
            'slic_iters': self.slic_iters,
            'kmeans_iters': self.kmeans_iters,
            'adaptive_mu': self.adaptive_mu,
        }


def validate_pair(image: HyperspectralImage, library: SpectralLibrary) -> None:
    """Check that an image and a library share the same band count"""
    if image.bands != library.bands:
        logger.error(f"Band mismatch: image L={image.bands}, library L={library.bands}")
        raise BandMismatch(image.bands, library.bands)
