"""Shared numeric helpers: rounding and color-space conversions.

Every pixel-producing stage in the pipeline rounds with the same half-up
convention so that golden tests stay stable across modules.
"""

from __future__ import annotations

import hashlib

import numpy as np

# BT.601 full-range RGB -> YCbCr. Rows: Y, Cb, Cr.
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ],
    dtype=np.float64,
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)


def round_half_up(x: np.ndarray | float) -> np.ndarray:
    """Round to nearest integer with exact halves going up (0.5 -> 1)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """Full-range BT.601 conversion. Input any float/int RGB array (..., 3)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    ycc = rgb @ _RGB_TO_YCBCR.T
    ycc[..., 1] += 128.0
    ycc[..., 2] += 128.0
    return ycc


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr`; returns float RGB, not clamped."""
    ycc = np.asarray(ycc, dtype=np.float64).copy()
    ycc[..., 1] -= 128.0
    ycc[..., 2] -= 128.0
    return ycc @ _YCBCR_TO_RGB.T


def luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 full-range luma of an RGB array (..., 3)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ _RGB_TO_YCBCR[0]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary labels (ints, strings).

    Used to give every (reference, family, level) cell of the distortion
    grid its own RNG stream independent of generation order.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
