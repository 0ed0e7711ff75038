"""Classic full-reference metrics over projections and sampled point clouds.

Image metrics operate on 8-bit RGB arrays (or TextureImage); luma metrics
use BT.601 full-range luma. Point-cloud metrics take clouds sampled from
textured meshes with :func:`sample_point_cloud`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

from .mesh_io import TexturedMesh, TextureImage
from .render import _bilinear
from .utils import luma, rgb_to_ycbcr, round_half_up

PSNR_CAP_DB = 100.0

MS_SSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])

_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T

GMSD_C = 170.0


class MetricError(ValueError):
    """Inputs a metric cannot be computed on."""


def _as_pixels(image) -> np.ndarray:
    if isinstance(image, TextureImage):
        return image.pixels.astype(np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise MetricError(f"image shape mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# image metrics
# ---------------------------------------------------------------------------

def psnr(ref, dist) -> float:
    """10*log10(255^2 / MSE) over all channels, capped at 100 dB."""
    a, b = _as_pixels(ref), _as_pixels(dist)
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0**2 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref, dist, window_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Luma SSIM: Gaussian-weighted local stats, mean over valid windows."""
    a, b = luma(_as_pixels(ref)), luma(_as_pixels(dist))
    _check_same_shape(a, b)
    if min(a.shape) < window_size:
        raise MetricError(f"image smaller than the {window_size}x{window_size} window")
    return float(np.mean(_ssim_map(a, b, window_size, sigma, k1, k2)[0]))


def _ssim_map(a, b, window_size, sigma, k1, k2):
    """Return (ssim map, contrast-structure map) over valid window positions."""
    w = _gaussian_window(window_size, sigma)
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    s = (2.0 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1) * cs
    return s, cs


def ms_ssim(ref, dist, weights: np.ndarray = MS_SSIM_WEIGHTS) -> float:
    """Five-scale SSIM with dyadic 2x2-mean downsampling between scales.

    Weights are normalized to sum to one; negative per-scale terms are
    clamped at zero before the weighted geometric mean.
    """
    a, b = luma(_as_pixels(ref)), luma(_as_pixels(dist))
    _check_same_shape(a, b)
    n_scales = len(weights)
    if min(a.shape) < 11 * 2 ** (n_scales - 1):
        raise MetricError(
            f"images must be at least {11 * 2 ** (n_scales - 1)} pixels per side "
            f"for {n_scales} dyadic scales"
        )
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()

    value = 1.0
    for scale in range(n_scales):
        s_map, cs_map = _ssim_map(a, b, 11, 1.5, 0.01, 0.03)
        if scale < n_scales - 1:
            term = max(0.0, float(np.mean(cs_map)))
            a, b = _halve(a), _halve(b)
        else:
            term = max(0.0, float(np.mean(s_map)))
        value *= term ** w[scale]
    return float(value)


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    c = img[:h, :w]
    return (c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2]) / 4.0


def gmsd(ref, dist) -> float:
    """Standard deviation of the gradient-magnitude similarity map.

    Luma is 2x2 mean-pooled, gradients come from 3x3 Prewitt convolution
    with symmetric boundary handling, similarity uses c = 170.
    """
    a, b = luma(_as_pixels(ref)), luma(_as_pixels(dist))
    _check_same_shape(a, b)
    a, b = _halve(a), _halve(b)
    gm_a = _gradient_magnitude(a)
    gm_b = _gradient_magnitude(b)
    sim = (2.0 * gm_a * gm_b + GMSD_C) / (gm_a**2 + gm_b**2 + GMSD_C)
    return float(np.std(sim))


def _gradient_magnitude(img: np.ndarray) -> np.ndarray:
    gx = convolve2d(img, _PREWITT_X, mode="same", boundary="symm")
    gy = convolve2d(img, _PREWITT_Y, mode="same", boundary="symm")
    return np.sqrt(gx**2 + gy**2)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

@dataclass
class ColoredPointCloud:
    points: np.ndarray   # (n, 3) float64
    colors: np.ndarray   # (n, 3) uint8

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise MetricError("points and colors must have equal length")
        if len(self.points) < 1:
            raise MetricError("point cloud must contain at least one point")


def sample_point_cloud(mesh: TexturedMesh, n_points: int, seed: int = 0) -> ColoredPointCloud:
    """Area-weighted uniform surface sampling with bilinear texture colors."""
    if n_points < 1:
        raise MetricError(f"n_points must be >= 1, got {n_points}")
    if mesh.n_faces == 0:
        raise MetricError("cannot sample an empty mesh")
    p = mesh.positions
    f = mesh.faces[:, :, 0]
    e1 = p[f[:, 1]] - p[f[:, 0]]
    e2 = p[f[:, 2]] - p[f[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    total = areas.sum()
    if total <= 0.0:
        raise MetricError("zero-area mesh cannot be sampled")

    rng = np.random.default_rng(seed)
    face_idx = rng.choice(len(f), size=n_points, p=areas / total)
    r1 = rng.random(n_points)
    r2 = rng.random(n_points)
    sqrt_r1 = np.sqrt(r1)
    bary = np.stack([1.0 - sqrt_r1, sqrt_r1 * (1.0 - r2), sqrt_r1 * r2], axis=1)

    chosen = mesh.faces[face_idx]
    pts = np.einsum("nc,ncd->nd", bary, p[chosen[:, :, 0]])
    uv = np.einsum("nc,ncd->nd", bary, mesh.uvs[chosen[:, :, 1]])
    tex = mesh.texture.pixels.astype(np.float64)
    colors = _bilinear(tex, mesh.texture.width, mesh.texture.height, uv)
    colors = np.clip(round_half_up(colors), 0, 255).astype(np.uint8)
    return ColoredPointCloud(pts, colors)


def _nearest(target: ColoredPointCloud, query_points: np.ndarray):
    tree = cKDTree(target.points)
    dist, idx = tree.query(query_points, k=1)
    return dist, idx


def p2point_mse(ref: ColoredPointCloud, dist: ColoredPointCloud) -> float:
    """Symmetric max of directed mean squared nearest-neighbor distances."""
    d1, _ = _nearest(ref, dist.points)
    d2, _ = _nearest(dist, ref.points)
    return max(float(np.mean(d1**2)), float(np.mean(d2**2)))


def estimate_normals(cloud: ColoredPointCloud, k: int = 12) -> np.ndarray:
    """Unoriented unit normals from a plane fit to each point and its k NN."""
    n = len(cloud.points)
    if n < k + 1:
        raise MetricError(f"normal estimation needs at least {k + 1} points, got {n}")
    tree = cKDTree(cloud.points)
    _, idx = tree.query(cloud.points, k=k + 1)  # includes the point itself
    neigh = cloud.points[idx]                   # (n, k+1, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]  # eigenvector of the smallest eigenvalue


def p2plane_mse(ref: ColoredPointCloud, dist: ColoredPointCloud) -> float:
    """Like p2point but errors are projected onto the matched cloud's normals."""
    n_ref = estimate_normals(ref)
    n_dist = estimate_normals(dist)
    d1 = _directed_p2plane(ref, n_ref, dist.points)
    d2 = _directed_p2plane(dist, n_dist, ref.points)
    return max(d1, d2)


def _directed_p2plane(target: ColoredPointCloud, target_normals: np.ndarray,
                      query_points: np.ndarray) -> float:
    _, idx = _nearest(target, query_points)
    disp = query_points - target.points[idx]
    proj = np.einsum("nd,nd->n", disp, target_normals[idx])
    return float(np.mean(proj**2))


def psnr_yuv(ref: ColoredPointCloud, dist: ColoredPointCloud) -> float:
    """Color PSNR over nearest-neighbor pairs, (6,1,1)/8 channel weights.

    Symmetric min of the two directions (the worse one governs).
    """
    return min(_directed_psnr_yuv(ref, dist), _directed_psnr_yuv(dist, ref))


def _directed_psnr_yuv(target: ColoredPointCloud, query: ColoredPointCloud) -> float:
    _, idx = _nearest(target, query.points)
    ycc_q = rgb_to_ycbcr(query.colors.astype(np.float64))
    ycc_t = rgb_to_ycbcr(target.colors[idx].astype(np.float64))
    per_channel = np.mean((ycc_q - ycc_t) ** 2, axis=0)
    weighted = float((6.0 * per_channel[0] + per_channel[1] + per_channel[2]) / 8.0)
    if weighted == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0**2 / weighted))
