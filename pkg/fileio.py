#!/usr/bin/env python3
"""
File formats:

- cube: `<name>.hdr` (UTF-8 "key: value" lines) beside `<name>.bin`
  (little-endian float64, band-interleaved-by-pixel)
- library: CSV `band,sig_0,...`, optional `material,...` row, one row per band
- segment map: text, "N K" then N labels on one line
- abundance maps: binary PGM (P5), 8-bit
- run reports / best-row records: "key: value" lines
- sweep files: "key=v1,v2,..." lines in .env syntax
- results: CSV with the metrics.CSV_COLUMNS header
"""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from dotenv.parser import parse_stream

from datamodel import AbundanceMatrix, HyperspectralImage, SegmentMap, SpectralLibrary
from errors import (BadMagic, FormatError, HeaderMismatch, NonNumeric, RaggedRows, ShapeMismatch,
                    TruncatedData)
from metrics import CSV_COLUMNS

logger = logging.getLogger(__name__)

CUBE_MAGIC = 'MUSC1'
CUBE_DTYPE = 'f64le'


@dataclass(frozen=True)
class CubeHeader:
    bands: int
    rows: int
    cols: int
    seed: Optional[int] = None
    description: str = ''
    magic: str = CUBE_MAGIC
    dtype: str = CUBE_DTYPE

    def to_text(self) -> str:
        lines = [
            f"magic: {self.magic}",
            f"bands: {self.bands}",
            f"rows: {self.rows}",
            f"cols: {self.cols}",
            f"dtype: {self.dtype}",
            f"seed: {'' if self.seed is None else self.seed}",
            f"description: {self.description}",
        ]
        return '\n'.join(lines) + '\n'


def cube_paths(path) -> Tuple[Path, Path]:
    """(header, binary) paths for a cube named by either file or by its stem"""
    p = Path(path)
    if p.suffix in ('.hdr', '.bin'):
        p = p.with_suffix('')
    return p.with_name(p.name + '.hdr'), p.with_name(p.name + '.bin')


def read_key_values(path) -> Dict[str, str]:
    """Parse "key: value" lines, skipping blanks and # comments"""
    values = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.rstrip('\n')
            if not line.strip() or line.lstrip().startswith('#'):
                continue
            key, sep, value = line.partition(':')
            if not sep:
                raise FormatError(f"{path}: line without 'key: value' form: {line!r}")
            values[key.strip()] = value.strip()
    return values


def write_key_values(path, values: Dict[str, object]) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        for key, value in values.items():
            f.write(f"{key}: {'' if value is None else value}\n")


def _parse_header(path: Path) -> CubeHeader:
    kv = read_key_values(path)
    if kv.get('magic') != CUBE_MAGIC:
        raise BadMagic(f"{path}: magic is {kv.get('magic')!r}, expected {CUBE_MAGIC!r}")
    if kv.get('dtype') != CUBE_DTYPE:
        raise HeaderMismatch(f"{path}: dtype {kv.get('dtype')!r} is not {CUBE_DTYPE!r}")
    try:
        bands, rows, cols = int(kv['bands']), int(kv['rows']), int(kv['cols'])
        seed = int(kv['seed']) if kv.get('seed') else None
    except (KeyError, ValueError) as e:
        raise HeaderMismatch(f"{path}: missing or non-integer header field ({e})") from e
    if min(bands, rows, cols) < 1:
        raise HeaderMismatch(f"{path}: counts must be >= 1, got bands={bands} rows={rows} cols={cols}")
    return CubeHeader(bands, rows, cols, seed, kv.get('description', ''))


def write_cube(path, image: HyperspectralImage, seed: Optional[int] = None, description: str = '') -> CubeHeader:
    """Write header + BIP float64 binary; returns the header written"""
    hdr_path, bin_path = cube_paths(path)
    hdr_path.parent.mkdir(parents=True, exist_ok=True)
    header = CubeHeader(image.bands, image.rows, image.cols, seed, description.replace('\n', ' '))
    hdr_path.write_text(header.to_text(), encoding='utf-8')
    bip = np.ascontiguousarray(image.data.T, dtype='<f8')
    bin_path.write_bytes(bip.tobytes())
    logger.info(f"Wrote cube {bin_path} ({image.rows}x{image.cols}x{image.bands})")
    return header


def read_cube(path) -> Tuple[CubeHeader, HyperspectralImage]:
    hdr_path, bin_path = cube_paths(path)
    header = _parse_header(hdr_path)
    raw = bin_path.read_bytes()
    expected = header.bands * header.rows * header.cols * 8
    if len(raw) % 8 or len(raw) < expected:
        raise TruncatedData(f"{bin_path}: {len(raw)} bytes, header implies {expected}")
    if len(raw) > expected:
        raise HeaderMismatch(f"{bin_path}: {len(raw)} bytes, header implies {expected}")
    bip = np.frombuffer(raw, dtype='<f8').reshape(header.rows * header.cols, header.bands)
    return header, HyperspectralImage(header.rows, header.cols, bip.T.astype(np.float64))


def write_abundances(path, abundances: AbundanceMatrix, rows: int, cols: int, description: str = '') -> CubeHeader:
    """Abundances travel as a cube with bands = P"""
    return write_cube(path, HyperspectralImage(rows, cols, abundances.values), description=description)


def read_abundances(path) -> Tuple[CubeHeader, AbundanceMatrix]:
    header, image = read_cube(path)
    return header, AbundanceMatrix(image.data)


def write_library(path, library: SpectralLibrary) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"sig_{j}" for j in range(library.count)]
    frame = pd.DataFrame(library.signatures, columns=columns)
    frame.index.name = 'band'
    with open(path, 'w', newline='', encoding='utf-8') as f:
        if library.material_map is None:
            frame.to_csv(f, float_format='%.17g')
        else:
            materials = pd.DataFrame([library.material_map], columns=columns,
                                     index=pd.Index(['material'], name='band'))
            materials.to_csv(f)
            frame.to_csv(f, header=False, float_format='%.17g')
    logger.info(f"Wrote library {path} ({library.bands} bands x {library.count} signatures)")


def read_library(path) -> SpectralLibrary:
    try:
        head = pd.read_csv(path, index_col=0, nrows=1, dtype=str)
        has_materials = len(head) > 0 and str(head.index[0]).strip() == 'material'
        frame = pd.read_csv(path, index_col=0, skiprows=[1] if has_materials else None,
                            float_precision='round_trip')
    except pd.errors.EmptyDataError as e:
        raise NonNumeric(f"{path}: empty library file") from e
    except pd.errors.ParserError as e:
        raise RaggedRows(f"{path}: {e}") from e

    if str(frame.index.name).strip() != 'band' or frame.shape[1] < 1:
        raise NonNumeric(f"{path}: first row must be 'band,sig_0,...'")
    materials = None
    if has_materials:
        if head.iloc[0].isna().any():
            raise RaggedRows(f"{path}: material row has missing fields")
        materials = tuple(str(m).strip() for m in head.iloc[0])
    if frame.empty:
        raise NonNumeric(f"{path}: no band rows")
    bad = [c for c, t in frame.dtypes.items() if t.kind not in 'iuf']
    if bad:
        raise NonNumeric(f"{path}: non-numeric values in columns {bad}")
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        lineno = int(np.flatnonzero(missing)[0]) + (3 if has_materials else 2)
        raise RaggedRows(f"{path}:{lineno}: missing fields")
    return SpectralLibrary(frame.to_numpy(dtype=np.float64), materials)


def write_segment_map(path, seg: SegmentMap) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{seg.pixels} {seg.segment_count}\n")
        f.write(' '.join(str(int(v)) for v in seg.labels) + '\n')
    logger.info(f"Wrote segment map {path} (N={seg.pixels}, K={seg.segment_count})")


def read_segment_map(path) -> SegmentMap:
    lines = Path(path).read_text(encoding='utf-8').split('\n')
    try:
        n, k = (int(v) for v in lines[0].split())
        labels = np.array([int(v) for v in lines[1].split()], dtype=np.int64)
    except (IndexError, ValueError) as e:
        raise NonNumeric(f"{path}: expected 'N K' and a line of integer labels ({e})") from e
    if labels.size != n:
        raise HeaderMismatch(f"{path}: header says N={n}, found {labels.size} labels")
    seg = SegmentMap.from_labels(labels, allow_identity=True)
    if seg.segment_count != k or not np.array_equal(seg.labels, labels):
        raise HeaderMismatch(f"{path}: labels are not dense ids in [0, {k})")
    return seg


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to bytes, clamping outside and rounding halves up"""
    clamped = np.clip(np.nan_to_num(values, nan=0.0), 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def write_pgm(path, plane: np.ndarray) -> None:
    Image.fromarray(quantize(plane)).save(path, format='PPM')


def export_abundance_maps(abundances: AbundanceMatrix, rows: int, cols: int, out_dir,
                          indices: Optional[Iterable[int]] = None, prefix: str = 'em') -> List[Path]:
    """One 8-bit PGM per abundance row, named <prefix>_<index>.pgm"""
    values = abundances.values
    if values.shape[1] != rows * cols:
        raise ShapeMismatch(f"abundances cover {values.shape[1]} pixels, map is {rows}x{cols}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for index in (range(values.shape[0]) if indices is None else indices):
        target = out_dir / f"{prefix}_{index}.pgm"
        write_pgm(target, values[index].reshape(rows, cols))
        written.append(target)
    logger.info(f"Exported {len(written)} abundance maps to {out_dir}")
    return written


def export_band_previews(image: HyperspectralImage, bands: Iterable[int], out_dir) -> List[Path]:
    """PGM per requested band, each scaled by its own maximum"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cube = image.as_cube()
    written = []
    for band in bands:
        if not 0 <= band < image.bands:
            raise ShapeMismatch(f"band {band} outside [0, {image.bands})")
        plane = cube[:, :, band]
        peak = float(plane.max())
        target = out_dir / f"band_{band}.pgm"
        write_pgm(target, plane / peak if peak > 0 else plane)
        written.append(target)
    return written


def _parse_value(raw: str):
    raw = raw.strip()
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    if raw.lower() in ('true', 'false'):
        return raw.lower() == 'true'
    return raw


def read_sweep_file(path) -> Dict[str, list]:
    """key=v1,v2,... lines in .env syntax; every value list, even a single value"""
    grid = {}
    with open(path, 'r', encoding='utf-8') as f:
        for binding in parse_stream(f):
            if binding.error:
                raise FormatError(f"{path}:{binding.original.line}: expected key=v1,v2,...")
            if binding.key is None:
                continue
            values = [v for v in (binding.value or '').split(',') if v.strip()]
            if not values:
                raise FormatError(f"{path}:{binding.original.line}: no values for {binding.key!r}")
            grid[binding.key] = [_parse_value(v) for v in values]
    if not grid:
        raise FormatError(f"{path}: sweep file has no parameters")
    return grid


def expand_sweep(grid: Dict[str, list]) -> List[Dict[str, object]]:
    """Cartesian product of the value lists, keys in file order"""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def append_results(path, rows: List[dict]) -> pd.DataFrame:
    """Append rows to a results CSV (creating it with a header), keeping CSV_COLUMNS order"""
    path = Path(path)
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
    if path.exists() and path.stat().st_size > 0:
        frame = pd.concat([pd.read_csv(path, dtype={'config_hash': str}), frame], ignore_index=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.17g')
    return frame


def write_results(path, rows: List[dict]) -> pd.DataFrame:
    """Write rows sorted by config hash (stable for identical hashes)"""
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS).sort_values('config_hash', kind='mergesort')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.17g')
    return frame.reset_index(drop=True)
