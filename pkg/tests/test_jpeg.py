import numpy as np
import pytest

from headqa import metrics, synth
from headqa.jpeg import (CHROMA_TABLE, LUMA_TABLE, compress_texture,
                         quality_scaled_table)
from headqa.mesh_io import TextureImage


class TestQualityScaling:
    def test_reference_point_50(self):
        np.testing.assert_array_equal(quality_scaled_table(LUMA_TABLE, 50), LUMA_TABLE)

    def test_quality_100_all_ones(self):
        assert (quality_scaled_table(LUMA_TABLE, 100) == 1.0).all()
        assert (quality_scaled_table(CHROMA_TABLE, 100) == 1.0).all()

    def test_quality_1_saturates(self):
        table = quality_scaled_table(LUMA_TABLE, 1)
        assert (table == 255.0).all()

    def test_matches_scalar_rule(self):
        for q in (3, 10, 15, 20, 49, 50, 51, 75, 95):
            scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
            expected = np.clip(np.floor((LUMA_TABLE * scale + 50.0) / 100.0), 1, 255)
            np.testing.assert_array_equal(quality_scaled_table(LUMA_TABLE, q), expected)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            quality_scaled_table(LUMA_TABLE, 0)
        with pytest.raises(ValueError):
            quality_scaled_table(LUMA_TABLE, 101)


class TestCompress:
    def test_constant_image_q100_identity(self):
        tex = TextureImage(np.full((32, 32, 3), [180, 90, 42], dtype=np.uint8))
        out = compress_texture(tex, 100)
        np.testing.assert_array_equal(out.pixels, tex.pixels)

    def test_dimensions_preserved(self):
        rng = np.random.default_rng(0)
        for h, w in [(16, 16), (17, 23), (8, 40), (9, 9)]:
            tex = TextureImage(rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8))
            out = compress_texture(tex, 10)
            assert (out.height, out.width) == (h, w)

    def test_monotone_in_quality(self):
        # harsher quantization must hurt PSNR on real texture content
        for seed in range(5):
            tex = synth.make_skin_texture(seed=seed, size=64)
            p3 = metrics.psnr(tex, compress_texture(tex, 3))
            p20 = metrics.psnr(tex, compress_texture(tex, 20))
            assert p3 < p20

    def test_level_ladder_strictly_degrades(self):
        tex = synth.make_skin_texture(seed=2, size=64)
        values = [metrics.psnr(tex, compress_texture(tex, q)) for q in (3, 10, 15, 20)]
        assert values == sorted(values)

    def test_gray_stays_gray(self):
        # R=G=B means constant 128 chroma, which quantizes exactly; only the
        # luma plane may move
        rng = np.random.default_rng(1)
        gray = rng.integers(0, 256, size=(16, 16, 1)).astype(np.uint8)
        tex = TextureImage(np.repeat(gray, 3, axis=2))
        out = compress_texture(tex, 30)
        np.testing.assert_array_equal(out.pixels[:, :, 0], out.pixels[:, :, 1])
        np.testing.assert_array_equal(out.pixels[:, :, 0], out.pixels[:, :, 2])

    def test_smooth_image_survives_high_quality(self):
        yy, xx = np.meshgrid(np.arange(48), np.arange(48), indexing="ij")
        ramp = ((xx + yy) * 255 / 94).astype(np.uint8)
        tex = TextureImage(np.stack([ramp] * 3, axis=-1))
        out = compress_texture(tex, 95)
        assert metrics.psnr(tex, out) > 40.0
