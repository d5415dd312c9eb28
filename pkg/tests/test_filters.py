import numpy as np
import pytest
from numpy.testing import assert_array_equal
from PIL import Image

from lcnn.errors import ConfigError
from lcnn.visualization.filters import export_filters, filter_images, tile_filters


def test_filter_images_normalize_each_row():
    images = filter_images(np.array([[0.0, 1.0, 2.0, 4.0], [3.0, 3.0, 3.0, 3.0]]), 2, 2)
    assert images.shape == (2, 2, 2)
    assert images.dtype == np.uint8
    assert_array_equal(images[0], [[0, 64], [128, 255]])
    assert_array_equal(images[1], 128)


def test_filter_images_check_geometry():
    with pytest.raises(ConfigError):
        filter_images(np.zeros((3, 5)), 2, 2)


def test_tile_filters_layout():
    images = np.full((5, 2, 3), 200, dtype=np.uint8)
    sheet = tile_filters(images, padding=1)
    # three tiles per side
    assert sheet.shape == (3 * 2 + 2, 3 * 3 + 2)
    assert sheet[0, 0] == 200
    assert sheet[2, 0] == 0
    assert sheet[-1, -1] == 0


def test_export_filters_writes_readable_images(tmp_path, rng):
    paths = export_filters(rng.normal(size=(4, 9)), 3, 3, tmp_path / "filters")
    assert [p.name for p in paths] == [
        "filter_000.pgm",
        "filter_001.pgm",
        "filter_002.pgm",
        "filter_003.pgm",
        "filters_sheet.pgm",
    ]
    with Image.open(paths[0]) as image:
        assert image.size == (3, 3)
    with Image.open(paths[-1]) as sheet:
        assert sheet.size == (7, 7)


def test_pixel_ramp_becomes_a_gradient():
    (image,) = filter_images(np.arange(16.0).reshape(1, 16), 4, 4)
    assert image[0, 0] == 0
    assert image[-1, -1] == 255
    assert image[0, -1] < image[-1, 0]
    assert np.all(np.diff(image[0].astype(int)) > 0)


def test_hidden_layer_of_196_gives_a_14_by_14_sheet():
    images = filter_images(np.random.default_rng(0).normal(size=(196, 784)), 28, 28)
    assert tile_filters(images, padding=0).shape == (14 * 28, 14 * 28)
