import io

import numpy as np
import pytest
from PIL import Image

from scenecam.errors import EmptyInputError, ShapeError
from scenecam.services.rendering import (
    encode_png,
    feature_panel,
    grayscale,
    grayscale_raster,
    save_png,
    to_display,
)


def test_grayscale_spans_full_range():
    out = grayscale(np.array([[-2.0, 0.0], [1.0, 2.0]]))
    assert out.dtype == np.uint8
    np.testing.assert_array_equal(out, [[0, 128], [191, 255]])


def test_constant_image_is_black():
    np.testing.assert_array_equal(grayscale(np.full((3, 4), 9.0)), 0)


def test_display_puts_low_frequencies_at_the_bottom():
    values = np.zeros((5, 3))
    values[1, 0] = 1.0  # t=1, lowest mel bin
    raster = to_display(values)
    assert raster.shape == (3, 5)
    assert raster[2, 1] == 1.0


def test_png_is_readable(tmp_path, rng):
    raster = grayscale_raster(rng.standard_normal((50, 20)))
    path = save_png(raster, tmp_path / "out.png")
    with Image.open(path) as im:
        assert im.mode == "L"
        assert im.size == (50, 20)
        np.testing.assert_array_equal(np.asarray(im), raster)


def test_rgb_png():
    rgb = np.zeros((4, 6, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    with Image.open(io.BytesIO(encode_png(rgb))) as im:
        assert im.mode == "RGB"
        assert im.getpixel((0, 0)) == (255, 0, 0)


def test_png_rejects_float_rasters():
    with pytest.raises(ShapeError):
        encode_png(np.zeros((4, 4)))


class TestPanel:
    def test_layout(self, rng):
        images = [rng.standard_normal((30, 10)) for _ in range(4)]
        panel = feature_panel(images, gap=2)
        assert panel.shape == (10, 4 * 30 + 3 * 2)
        np.testing.assert_array_equal(panel[:, 30:32], 255)
        np.testing.assert_array_equal(panel[:, 32:62], grayscale_raster(images[1]))

    def test_images_are_scaled_independently(self):
        panel = feature_panel([np.array([[0.0, 1.0]]), np.array([[0.0, 100.0]])], gap=1)
        np.testing.assert_array_equal(panel[:, 0], panel[:, 2])

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            feature_panel([])
