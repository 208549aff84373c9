#!/usr/bin/env python3
"""
Multiscale decomposition of a hyperspectral image.

A SegmentMap groups pixels into K regions. apply_w averages every region
(image -> coarse domain, Y_C = Y W) and apply_w_conj broadcasts each region's
value back onto its pixels (coarse -> image domain, X_D = X_C W*).
Three ways to build the grouping: SLIC superpixels, K-means on the spectra,
and a plain rectangular grid.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

import config
from datamodel import HyperspectralImage, MuaConfig, SegmentMap, Transform
from errors import (InvalidK, InvalidParameter, PixelCountMismatch, RegionTooLarge,
                    SegmentCountMismatch, ShapeMismatch)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlicParams:
    """SLIC settings; compactness=None picks 1e-2 x mean pixel spectral norm"""
    region_size: int
    compactness: Optional[float] = None
    iters: int = config.SLIC_ITERS
    seed: int = 0

    def __post_init__(self):
        if self.region_size < 2:
            raise InvalidParameter(f"region_size must be >= 2, got {self.region_size}")
        if self.compactness is not None and self.compactness < 0:
            raise InvalidParameter(f"compactness must be >= 0, got {self.compactness}")
        if self.iters < 1:
            raise InvalidParameter(f"iters must be >= 1, got {self.iters}")


def _indicator(labels: np.ndarray, count: int) -> sparse.csr_matrix:
    """K x N 0/1 matrix with a one at (labels[n], n)"""
    n = labels.size
    return sparse.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(count, n))


def _as_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got {m.ndim}-D")
    return m


def apply_w(matrix, seg: SegmentMap) -> np.ndarray:
    """Average the columns of an R x N matrix per segment, giving R x K"""
    m = _as_matrix(matrix)
    if m.shape[1] != seg.pixels:
        raise PixelCountMismatch(f"matrix has {m.shape[1]} columns, segment map covers {seg.pixels} pixels")
    sums = np.asarray(_indicator(seg.labels, seg.segment_count) @ m.T).T
    return sums / seg.sizes[np.newaxis, :]


def apply_w_conj(coarse, seg: SegmentMap) -> np.ndarray:
    """Broadcast an R x K coarse matrix back to R x N by label"""
    c = _as_matrix(coarse)
    if c.shape[1] != seg.segment_count:
        raise SegmentCountMismatch(f"coarse matrix has {c.shape[1]} columns, segment map has {seg.segment_count} segments")
    return c[:, seg.labels]


def coarse_preview(image: HyperspectralImage, seg: SegmentMap) -> HyperspectralImage:
    """The image with every segment replaced by its mean spectrum"""
    return HyperspectralImage(image.rows, image.cols, apply_w_conj(apply_w(image.data, seg), seg))


def grid_segment(image: HyperspectralImage, region_size: int) -> SegmentMap:
    """Tile the image into region_size x region_size blocks (edge blocks smaller)"""
    if region_size < 1:
        raise InvalidParameter(f"region_size must be >= 1, got {region_size}")
    block_cols = -(-image.cols // region_size)
    r = np.arange(image.rows) // region_size
    c = np.arange(image.cols) // region_size
    labels = (r[:, np.newaxis] * block_cols + c[np.newaxis, :]).ravel()
    return SegmentMap.from_labels(labels, allow_identity=region_size == 1)


def _seed_axis(length: int, step: int) -> np.ndarray:
    seeds = np.arange(step / 2.0, length, step)
    if seeds.size == 0:
        seeds = np.array([length / 2.0])
    return seeds


def _enforce_connectivity(labels: np.ndarray, rows: int, cols: int, min_size: float) -> np.ndarray:
    """Split labels into 4-connected components, then fold small fragments into their largest neighbour"""
    grid = labels.reshape(rows, cols)
    idx = np.arange(rows * cols).reshape(rows, cols)
    same_h = grid[:, :-1] == grid[:, 1:]
    same_v = grid[:-1, :] == grid[1:, :]
    src = np.concatenate([idx[:, :-1][same_h], idx[:-1, :][same_v]])
    dst = np.concatenate([idx[:, 1:][same_h], idx[1:, :][same_v]])
    graph = sparse.coo_matrix((np.ones(src.size), (src, dst)), shape=(labels.size, labels.size))
    n_comp, comp = connected_components(graph, directed=False)

    size = np.bincount(comp, minlength=n_comp).astype(np.int64)
    if not np.any(size < min_size):
        return comp

    a = np.concatenate([comp[idx[:, :-1][~same_h]], comp[idx[:-1, :][~same_v]]])
    b = np.concatenate([comp[idx[:, 1:][~same_h]], comp[idx[1:, :][~same_v]]])
    neighbours = [set() for _ in range(n_comp)]
    for p, q in zip(a.tolist(), b.tolist()):
        if p != q:
            neighbours[p].add(q)
            neighbours[q].add(p)

    parent = np.arange(n_comp)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in np.flatnonzero(size < min_size).tolist():
        if find(c) != c or size[c] >= min_size:
            continue
        candidates = {find(n) for n in neighbours[c]} - {c}
        if not candidates:
            continue
        # largest neighbour wins, lower id on ties
        target = max(candidates, key=lambda t: (size[t], -t))
        parent[c] = target
        size[target] += size[c]
        neighbours[target] |= neighbours[c]

    roots = np.array([find(c) for c in range(n_comp)])
    return roots[comp]


def slic_segment(image: HyperspectralImage, params: SlicParams) -> SegmentMap:
    """
    SLIC superpixels over the full reflectance vectors.

    Distance is d^2 = d_spec^2 + (compactness / S)^2 * d_spat^2 with S = region_size,
    searched in a 2S x 2S window around each centre. Centres move to the mean
    spectrum and mean position of their pixels. Fragments smaller than S^2/4
    are merged into their largest adjacent segment afterwards.
    """
    n = image.pixels
    step = params.region_size
    if step * step >= n:
        raise RegionTooLarge(f"region_size^2 = {step * step} must be below N = {n}")
    rows, cols = image.rows, image.cols
    data = np.ascontiguousarray(image.data.T)

    compactness = params.compactness
    if compactness is None:
        compactness = 1e-2 * float(np.mean(np.linalg.norm(data, axis=1)))
        if compactness == 0.0:
            compactness = 1.0
    weight = (compactness / step) ** 2

    pix_r, pix_c = np.divmod(np.arange(n), cols)
    pos_y = pix_r + 0.5
    pos_x = pix_c + 0.5

    seeds_y = _seed_axis(rows, step)
    seeds_x = _seed_axis(cols, step)
    cen_y, cen_x = (g.ravel() for g in np.meshgrid(seeds_y, seeds_x, indexing='ij'))
    seed_pix = np.minimum(np.floor(cen_y).astype(int), rows - 1) * cols + np.minimum(np.floor(cen_x).astype(int), cols - 1)
    cen_spec = data[seed_pix].copy()
    n_centres = cen_y.size

    # start from the nearest seed so every pixel always carries a label
    row_seed = np.minimum(pix_r // step, seeds_y.size - 1)
    col_seed = np.minimum(pix_c // step, seeds_x.size - 1)
    labels = row_seed * seeds_x.size + col_seed
    alive = np.ones(n_centres, dtype=bool)

    for it in range(params.iters):
        dist = np.full(n, np.inf)
        for k in np.flatnonzero(alive).tolist():
            y0 = max(int(np.floor(cen_y[k] - step)), 0)
            y1 = min(int(np.ceil(cen_y[k] + step)), rows)
            x0 = max(int(np.floor(cen_x[k] - step)), 0)
            x1 = min(int(np.ceil(cen_x[k] + step)), cols)
            win = (np.arange(y0, y1)[:, np.newaxis] * cols + np.arange(x0, x1)[np.newaxis, :]).ravel()
            diff = data[win] - cen_spec[k]
            d = np.einsum('ij,ij->i', diff, diff)
            d += weight * ((pos_y[win] - cen_y[k]) ** 2 + (pos_x[win] - cen_x[k]) ** 2)
            better = d < dist[win]
            dist[win[better]] = d[better]
            labels[win[better]] = k

        counts = np.bincount(labels, minlength=n_centres)
        alive = counts > 0
        ind = _indicator(labels, n_centres)
        cnt = counts[alive]
        cen_spec[alive] = np.asarray(ind @ data)[alive] / cnt[:, np.newaxis]
        cen_y[alive] = (ind @ pos_y)[alive] / cnt
        cen_x[alive] = (ind @ pos_x)[alive] / cnt
        logger.debug(f"SLIC iteration {it + 1}: {int(alive.sum())} live centres")

    final = _enforce_connectivity(labels, rows, cols, step * step / 4.0)
    seg = SegmentMap.from_labels(final)
    logger.info(f"SLIC: region_size={step}, {n_centres} seeds -> {seg.segment_count} segments")
    return seg


def _squared_distances(points: np.ndarray, centres: np.ndarray) -> np.ndarray:
    d = (np.einsum('ij,ij->i', points, points)[:, np.newaxis]
         - 2.0 * points @ centres.T
         + np.einsum('ij,ij->i', centres, centres)[np.newaxis, :])
    return np.maximum(d, 0.0)


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        closest = np.minimum(closest, _squared_distances(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def kmeans_segment(image: HyperspectralImage, k: int, iters: int, seed: int) -> SegmentMap:
    """
    Lloyd's algorithm on the pixel spectra with k-means++ seeding.

    Each iteration assigns every pixel to its nearest centre (lower index on
    ties) and recomputes the centres; a centre left without pixels is moved
    onto the pixel farthest from its own centre. Stops early once the
    assignment no longer changes. Clusters need not be spatially connected.
    """
    n = image.pixels
    if k < 1 or k >= n:
        raise InvalidK(f"k must satisfy 1 <= k < N = {n}, got {k}")
    if iters < 1:
        raise InvalidParameter(f"iters must be >= 1, got {iters}")
    points = np.ascontiguousarray(image.data.T)
    rng = np.random.default_rng(seed)
    centres = _kmeans_plus_plus(points, k, rng)

    labels = None
    for it in range(iters):
        new_labels = np.argmin(_squared_distances(points, centres), axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            logger.debug(f"K-means converged after {it} iterations")
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        filled = counts > 0
        sums = np.asarray(_indicator(labels, k) @ points)
        centres[filled] = sums[filled] / counts[filled][:, np.newaxis]
        empty = np.flatnonzero(~filled)
        if empty.size:
            own = np.einsum('ij,ij->i', points - centres[labels], points - centres[labels])
            for j in empty.tolist():
                far = int(np.argmax(own))
                centres[j] = points[far]
                own[far] = -1.0
            logger.debug(f"K-means iteration {it + 1}: re-seeded {empty.size} empty clusters")

    seg = SegmentMap.from_labels(labels)
    logger.info(f"K-means: k={k} -> {seg.segment_count} non-empty clusters")
    return seg


def build_segment_map(image: HyperspectralImage, cfg: MuaConfig) -> SegmentMap:
    """Segment an image with the transform and region size named in the config"""
    cfg.check_pixels(image.pixels)
    if cfg.transform is Transform.SLIC:
        return slic_segment(image, SlicParams(cfg.region_size, cfg.compactness, cfg.slic_iters, cfg.seed))
    if cfg.transform is Transform.KMEANS:
        k = max(1, image.pixels // cfg.region_size ** 2)
        return kmeans_segment(image, k, cfg.kmeans_iters, cfg.seed)
    return grid_segment(image, cfg.region_size)
