import numpy as np
import pandas as pd
import pytest
from PIL import Image

from datamodel import AbundanceMatrix, HyperspectralImage, SegmentMap, SpectralLibrary
from errors import BadMagic, FormatError, HeaderMismatch, NonNumeric, RaggedRows, ShapeMismatch, TruncatedData
from fileio import (CUBE_MAGIC, append_results, cube_paths, expand_sweep, export_abundance_maps,
                    export_band_previews, quantize, read_cube, read_key_values, read_library, read_segment_map,
                    read_sweep_file, write_cube, write_library, write_results, write_segment_map)
from metrics import CSV_COLUMNS


@pytest.fixture
def cube(rng):
    return HyperspectralImage(3, 4, rng.standard_normal((5, 12)))


def test_cube_round_trip_is_bit_exact(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube, seed=7, description='dc1 test')
    header, back = read_cube(tmp_path / 'scene.hdr')
    assert (header.bands, header.rows, header.cols, header.seed) == (5, 3, 4, 7)
    assert header.description == 'dc1 test'
    assert back.data.tobytes() == cube.data.tobytes()


def test_cube_binary_is_pixel_interleaved(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube)
    raw = np.frombuffer((tmp_path / 'scene.bin').read_bytes(), dtype='<f8')
    np.testing.assert_array_equal(raw[:5], cube.data[:, 0])
    np.testing.assert_array_equal(raw[5:10], cube.data[:, 1])


def test_cube_header_is_key_value_text(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube, seed=3)
    kv = read_key_values(tmp_path / 'scene.hdr')
    assert kv['magic'] == CUBE_MAGIC
    assert kv['dtype'] == 'f64le'
    assert kv['bands'] == '5' and kv['seed'] == '3'


def test_truncated_binary(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube)
    _, bin_path = cube_paths(tmp_path / 'scene')
    bin_path.write_bytes(bin_path.read_bytes()[:-8])
    with pytest.raises(TruncatedData):
        read_cube(tmp_path / 'scene')


def test_header_disagrees_with_binary(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube)
    hdr_path, _ = cube_paths(tmp_path / 'scene')
    hdr_path.write_text(hdr_path.read_text().replace('rows: 3', 'rows: 2'))
    with pytest.raises(HeaderMismatch):
        read_cube(tmp_path / 'scene')


def test_bad_magic(tmp_path, cube):
    write_cube(tmp_path / 'scene', cube)
    hdr_path, _ = cube_paths(tmp_path / 'scene')
    hdr_path.write_text(hdr_path.read_text().replace(CUBE_MAGIC, 'ENVI'))
    with pytest.raises(BadMagic):
        read_cube(tmp_path / 'scene')


def test_missing_cube_is_os_error(tmp_path):
    with pytest.raises(OSError):
        read_cube(tmp_path / 'nothing')


def test_library_round_trip(tmp_path, rng):
    lib = SpectralLibrary(rng.random((6, 4)), material_map=('a', 'a', 'b', 'c'))
    write_library(tmp_path / 'lib.csv', lib)
    back = read_library(tmp_path / 'lib.csv')
    np.testing.assert_array_equal(back.signatures, lib.signatures)
    assert back.material_map == ('a', 'a', 'b', 'c')
    lines = (tmp_path / 'lib.csv').read_text().splitlines()
    assert lines[0] == 'band,sig_0,sig_1,sig_2,sig_3'
    assert lines[1] == 'material,a,a,b,c'
    assert lines[2].startswith('0,')


def test_library_without_materials(tmp_path, rng):
    lib = SpectralLibrary(rng.random((3, 2)))
    write_library(tmp_path / 'lib.csv', lib)
    back = read_library(tmp_path / 'lib.csv')
    assert back.material_map is None
    np.testing.assert_array_equal(back.signatures, lib.signatures)


@pytest.mark.parametrize("text", [
    'band,sig_0,sig_1\n0,0.1,0.2\n1,0.3\n',
    'band,sig_0,sig_1\n0,0.1,0.2\n1,0.3,0.4,0.5\n',
    'band,sig_0,sig_1\nmaterial,a\n0,0.1,0.2\n',
])
def test_library_ragged_rows(tmp_path, text):
    (tmp_path / 'lib.csv').write_text(text)
    with pytest.raises(RaggedRows):
        read_library(tmp_path / 'lib.csv')


@pytest.mark.parametrize("text", ['band,sig_0\n0,abc\n', '', 'band,sig_0\n', 'wavelength,sig_0\n0,0.5\n'])
def test_library_non_numeric_and_empty(tmp_path, text):
    (tmp_path / 'lib.csv').write_text(text)
    with pytest.raises(NonNumeric):
        read_library(tmp_path / 'lib.csv')


def test_segment_map_round_trip(tmp_path):
    seg = SegmentMap(np.array([0, 0, 1, 2, 1, 2]))
    write_segment_map(tmp_path / 'seg.txt', seg)
    assert (tmp_path / 'seg.txt').read_text().splitlines()[0] == '6 3'
    back = read_segment_map(tmp_path / 'seg.txt')
    np.testing.assert_array_equal(back.labels, seg.labels)


def test_segment_map_count_mismatch(tmp_path):
    (tmp_path / 'seg.txt').write_text('4 2\n0 1 1\n')
    with pytest.raises(HeaderMismatch):
        read_segment_map(tmp_path / 'seg.txt')


def test_quantize_rule():
    np.testing.assert_array_equal(quantize(np.array([0.0, 0.5, 1.0, -0.2, 1.7])), [0, 128, 255, 0, 255])


def test_abundance_maps(tmp_path):
    values = np.vstack([np.zeros(6), np.ones(6), np.full(6, 0.5)])
    written = export_abundance_maps(AbundanceMatrix(values), 2, 3, tmp_path)
    assert [p.name for p in written] == ['em_0.pgm', 'em_1.pgm', 'em_2.pgm']
    assert (tmp_path / 'em_0.pgm').read_bytes().startswith(b'P5')
    for path, level in zip(written, (0, 255, 128)):
        with Image.open(path) as img:
            assert img.size == (3, 2)
            assert set(np.asarray(img).ravel().tolist()) == {level}


def test_abundance_maps_shape_checked(tmp_path):
    with pytest.raises(ShapeMismatch):
        export_abundance_maps(AbundanceMatrix(np.zeros((1, 6))), 2, 2, tmp_path)


def test_band_previews(tmp_path, cube):
    written = export_band_previews(HyperspectralImage(3, 4, np.abs(cube.data)), [0, 4], tmp_path)
    assert [p.name for p in written] == ['band_0.pgm', 'band_4.pgm']
    with pytest.raises(ShapeMismatch):
        export_band_previews(cube, [5], tmp_path)


def test_sweep_file_expansion(tmp_path):
    (tmp_path / 'sweep.txt').write_text(
        '# DC1 grid\nlambda_c=0.005,0.03\nlambda=0.1,0.5\nbeta=10,30\ntransform=slic\nsnr_db=inf\n'
    )
    grid = read_sweep_file(tmp_path / 'sweep.txt')
    assert grid['beta'] == [10, 30] and grid['transform'] == ['slic'] and grid['snr_db'] == [float('inf')]
    cells = expand_sweep(grid)
    assert len(cells) == 8
    assert cells[0] == {'lambda_c': 0.005, 'lambda': 0.1, 'beta': 10, 'transform': 'slic', 'snr_db': float('inf')}


def test_sweep_file_malformed(tmp_path):
    (tmp_path / 'sweep.txt').write_text('lambda 0.1\n')
    with pytest.raises(FormatError):
        read_sweep_file(tmp_path / 'sweep.txt')


def test_sweep_file_dotenv_syntax(tmp_path):
    (tmp_path / 'sweep.txt').write_text(
        'export dataset="dc2"\nlambda=0.1,0.5  # two values\nadaptive_mu=true,false\n\nmethod=sunsal\n'
    )
    grid = read_sweep_file(tmp_path / 'sweep.txt')
    assert grid == {'dataset': ['dc2'], 'lambda': [0.1, 0.5], 'adaptive_mu': [True, False], 'method': ['sunsal']}


@pytest.mark.parametrize("text", ['lambda\n', 'lambda=\n', '# only a comment\n', 'beta=1,\nlambda="0.1\n'])
def test_sweep_file_without_values(tmp_path, text):
    (tmp_path / 'sweep.txt').write_text(text)
    with pytest.raises(FormatError):
        read_sweep_file(tmp_path / 'sweep.txt')


def _row(h, sre_db):
    return {'config_hash': h, 'transform': 'slic', 'lambda_c': 0.03, 'lambda': 0.1, 'beta': 30.0,
            'region_size': 6, 'snr_db': 20.0, 'sre_db': sre_db, 'rmse': 0.1, 'runtime_s': 1.0}


def test_results_sorted_and_appended(tmp_path):
    write_results(tmp_path / 'results.csv', [_row('bbb', 1.0), _row('aaa', 2.0)])
    frame = pd.read_csv(tmp_path / 'results.csv', dtype={'config_hash': str})
    assert list(frame.columns) == CSV_COLUMNS
    assert frame['config_hash'].tolist() == ['aaa', 'bbb']

    append_results(tmp_path / 'results.csv', [_row('ccc', float('inf'))])
    frame = pd.read_csv(tmp_path / 'results.csv', dtype={'config_hash': str})
    assert len(frame) == 3
    assert frame['sre_db'].iloc[-1] == float('inf')
