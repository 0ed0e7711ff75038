"""JPEG-style texture degradation: what quality loss actually touches.

Pixels only ever change through chroma subsampling and quantized 8x8 block
DCT, so that is the whole pipeline here: BT.601 conversion, 4:2:0
subsampling, DCT, Annex-K tables scaled by the IJG quality rule, inverse
path, clamp. Entropy coding is lossless and therefore omitted.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from .mesh_io import TextureImage
from .utils import round_half_up, rgb_to_ycbcr, ycbcr_to_rgb

# ITU T.81 Annex K reference quantization tables
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def quality_scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling: 50 is the reference point, 100 means all-ones."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((base * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def compress_texture(texture: TextureImage, quality: int) -> TextureImage:
    """Round-trip the texture through quantized block-DCT degradation."""
    luma_q = quality_scaled_table(LUMA_TABLE, quality)
    chroma_q = quality_scaled_table(CHROMA_TABLE, quality)

    h, w = texture.height, texture.width
    ycc = rgb_to_ycbcr(texture.pixels)
    # pad to multiples of 16 so luma blocks and half-resolution chroma
    # blocks both tile exactly
    ph = -h % 16
    pw = -w % 16
    ycc = np.pad(ycc, ((0, ph), (0, pw), (0, 0)), mode="edge")

    y = _quantize_plane(ycc[:, :, 0], luma_q)
    cb = _subsample(ycc[:, :, 1])
    cr = _subsample(ycc[:, :, 2])
    cb = _upsample(_quantize_plane(cb, chroma_q))
    cr = _upsample(_quantize_plane(cr, chroma_q))

    rgb = ycbcr_to_rgb(np.stack([y, cb, cr], axis=-1))[:h, :w]
    return TextureImage(np.clip(round_half_up(rgb), 0, 255).astype(np.uint8))


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)


def _unblocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).transpose(0, 2, 1, 3).reshape(h, w)


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    blocks = _blocks(plane - 128.0)
    coeffs = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    quantized = round_half_up(coeffs / table) * table
    restored = idctn(quantized, type=2, norm="ortho", axes=(-2, -1))
    return _unblocks(restored, h, w) + 128.0


def _subsample(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample(plane: np.ndarray) -> np.ndarray:
    return plane.repeat(2, axis=0).repeat(2, axis=1)
