import numpy as np
import pytest

from datamodel import (AbundanceMatrix, HyperspectralImage, MuaConfig, SegmentMap, SpectralLibrary, Transform,
                       validate_pair)
from errors import BandMismatch, InvalidParameter, MuaError, ShapeMismatch, ValidationError


def test_validate_pair_matching_bands():
    image = HyperspectralImage(2, 3, np.ones((224, 6)))
    library = SpectralLibrary(np.full((224, 4), 0.5))
    validate_pair(image, library)


def test_validate_pair_band_mismatch():
    image = HyperspectralImage(2, 3, np.ones((188, 6)))
    library = SpectralLibrary(np.full((224, 4), 0.5))
    with pytest.raises(BandMismatch) as exc:
        validate_pair(image, library)
    assert exc.value.l_image == 188
    assert exc.value.l_library == 224
    assert "188" in str(exc.value) and "224" in str(exc.value)


def test_validate_pair_degenerate():
    validate_pair(HyperspectralImage(1, 1, [[0.3]]), SpectralLibrary([[0.3]]))


def test_image_shape_checked():
    with pytest.raises(ShapeMismatch):
        HyperspectralImage(2, 2, np.ones((3, 5)))
    with pytest.raises(ValidationError):
        HyperspectralImage(0, 2, np.ones((3, 0)))


def test_image_is_read_only_copy():
    data = np.ones((2, 4))
    image = HyperspectralImage(2, 2, data)
    data[0, 0] = 7.0
    assert image.data[0, 0] == 1.0
    with pytest.raises(ValueError):
        image.data[0, 0] = 3.0


def test_cube_round_trip_is_row_major():
    cube = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    image = HyperspectralImage.from_cube(cube)
    assert image.bands == 4 and image.pixels == 6
    # pixel (r, c) is column r * cols + c
    np.testing.assert_array_equal(image.data[:, 1 * 3 + 2], cube[1, 2])
    np.testing.assert_array_equal(image.as_cube(), cube)


@pytest.mark.parametrize("signatures", [
    [[0.5, 1.2]],
    [[0.5, -0.1]],
    [[0.5, 0.0], [0.2, 0.0]],
])
def test_library_rejects_invalid_signatures(signatures):
    with pytest.raises(InvalidParameter):
        SpectralLibrary(signatures)


def test_library_material_map_length():
    with pytest.raises(ShapeMismatch):
        SpectralLibrary(np.full((3, 2), 0.5), material_map=('a',))


def test_library_fingerprint_tracks_contents():
    a = SpectralLibrary(np.full((3, 2), 0.5))
    b = SpectralLibrary(np.full((3, 2), 0.5))
    c = SpectralLibrary(np.full((3, 2), 0.4))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint


def test_segment_map_from_labels_renumbers_densely():
    seg = SegmentMap.from_labels([7, 7, 3, 9, 3])
    np.testing.assert_array_equal(seg.labels, [1, 1, 0, 2, 0])
    np.testing.assert_array_equal(seg.sizes, [2, 2, 1])
    assert seg.segment_count == 3 and seg.pixels == 5
    assert seg.sizes.sum() == seg.pixels


def test_segment_map_rejects_gaps_and_identity():
    with pytest.raises(InvalidParameter):
        SegmentMap(np.array([0, 2, 2]))
    with pytest.raises(InvalidParameter):
        SegmentMap(np.array([0, 1, 2]))
    with pytest.raises(InvalidParameter):
        SegmentMap(np.array([0, -1, 0]))


def test_segment_map_identity_allowed_explicitly():
    seg = SegmentMap.identity(4)
    assert seg.segment_count == 4
    np.testing.assert_array_equal(seg.sizes, [1, 1, 1, 1])


def test_single_pixel_map_needs_identity():
    with pytest.raises(InvalidParameter):
        SegmentMap(np.array([0]))
    with pytest.raises(InvalidParameter):
        SegmentMap.from_labels([4])
    seg = SegmentMap.identity(1)
    assert seg.segment_count == 1 and seg.pixels == 1


def test_abundance_matrix_needs_2d():
    with pytest.raises(ShapeMismatch):
        AbundanceMatrix(np.ones(3))


def test_mua_config_validation():
    cfg = MuaConfig(lambda_c=0.03, lambda_=0.1, beta=30.0, transform='kmeans')
    assert cfg.transform is Transform.KMEANS
    with pytest.raises(InvalidParameter):
        MuaConfig(lambda_c=0.0, lambda_=0.1, beta=1.0)
    with pytest.raises(InvalidParameter):
        MuaConfig(lambda_c=0.1, lambda_=0.1, beta=-1.0)
    with pytest.raises(InvalidParameter):
        MuaConfig(lambda_c=0.1, lambda_=0.1, beta=1.0, region_size=1)
    with pytest.raises(InvalidParameter):
        MuaConfig(lambda_c=0.1, lambda_=0.1, beta=1.0, transform='bpt')


def test_mua_config_region_must_fit_image():
    cfg = MuaConfig(lambda_c=0.1, lambda_=0.1, beta=1.0, region_size=5)
    cfg.check_pixels(26)
    with pytest.raises(InvalidParameter):
        cfg.check_pixels(25)


def test_mua_config_echo_is_flat():
    echo = MuaConfig(lambda_c=0.03, lambda_=0.1, beta=30.0).echo()
    assert echo['lambda'] == 0.1
    assert echo['transform'] == 'slic'
    assert all(not isinstance(v, (dict, list)) for v in echo.values())


def test_errors_share_a_root():
    assert issubclass(BandMismatch, MuaError)
    assert issubclass(BandMismatch, ValueError)
