"""Metric implementations against independent brute-force oracles."""

import numpy as np
import pytest
import scipy.stats

from headqa import metrics, synth
from headqa.metrics import (ColoredPointCloud, MetricError, estimate_normals, gmsd,
                            ms_ssim, p2plane_mse, p2point_mse, psnr, psnr_yuv,
                            sample_point_cloud, ssim)
from headqa.utils import luma, rgb_to_ycbcr

rng_global = np.random.default_rng(2024)


def random_image(rng, h=32, w=32):
    return rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)


# ---------------------------------------------------------------------------
# oracles (deliberately slow and independent of the implementations)
# ---------------------------------------------------------------------------

def oracle_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    ya, yb = luma(a.astype(np.float64)), luma(b.astype(np.float64))
    ax = np.arange(size) - (size - 1) / 2.0
    g1 = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g1, g1)
    w /= w.sum()
    c1, c2 = (k1 * 255) ** 2, (k2 * 255) ** 2
    h, wd = ya.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(wd - size + 1):
            pa = ya[i:i + size, j:j + size]
            pb = yb[i:i + size, j:j + size]
            mua = (w * pa).sum()
            mub = (w * pb).sum()
            va = (w * (pa - mua) ** 2).sum()
            vb = (w * (pb - mub) ** 2).sum()
            cov = (w * (pa - mua) * (pb - mub)).sum()
            vals.append(((2 * mua * mub + c1) * (2 * cov + c2))
                        / ((mua**2 + mub**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def oracle_gmsd(a, b, c=170.0):
    ya, yb = luma(a.astype(np.float64)), luma(b.astype(np.float64))

    def pool(img):
        h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
        out = np.zeros((h // 2, w // 2))
        for i in range(h // 2):
            for j in range(w // 2):
                out[i, j] = img[2 * i:2 * i + 2, 2 * j:2 * j + 2].mean()
        return out

    def grad_mag(img):
        kx = np.array([[1, 0, -1], [1, 0, -1], [1, 0, -1]]) / 3.0
        ky = kx.T
        padded = np.pad(img, 1, mode="symmetric")
        h, w = img.shape
        gx = np.zeros_like(img)
        gy = np.zeros_like(img)
        for i in range(h):
            for j in range(w):
                win = padded[i:i + 3, j:j + 3]
                gx[i, j] = (win * kx[::-1, ::-1]).sum()  # convolution flips
                gy[i, j] = (win * ky[::-1, ::-1]).sum()
        return np.sqrt(gx**2 + gy**2)

    ga, gb = grad_mag(pool(ya)), grad_mag(pool(yb))
    sim = (2 * ga * gb + c) / (ga**2 + gb**2 + c)
    return float(np.std(sim))


def oracle_nn_sq(src, dst):
    d2 = ((src[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1), d2.argmin(axis=1)


def oracle_p2point(ref, dist):
    d1, _ = oracle_nn_sq(dist.points, ref.points)
    d2, _ = oracle_nn_sq(ref.points, dist.points)
    return max(float(d1.mean()), float(d2.mean()))


def oracle_psnr_yuv(ref, dist):
    def directed(target, query):
        _, idx = oracle_nn_sq(query.points, target.points)
        q = rgb_to_ycbcr(query.colors.astype(np.float64))
        t = rgb_to_ycbcr(target.colors[idx].astype(np.float64))
        mse = ((q - t) ** 2).mean(axis=0)
        w = (6 * mse[0] + mse[1] + mse[2]) / 8.0
        return 100.0 if w == 0 else min(100.0, 10 * np.log10(255**2 / w))
    return min(directed(ref, dist), directed(dist, ref))


# ---------------------------------------------------------------------------
# PSNR
# ---------------------------------------------------------------------------

class TestPsnr:
    def test_identical_cap(self):
        img = random_image(rng_global)
        assert psnr(img, img) == 100.0

    def test_plus_one_everywhere(self):
        a = np.full((8, 8, 3), 100, dtype=np.uint8)
        b = a + 1
        assert psnr(a, b) == pytest.approx(20 * np.log10(255), abs=1e-9)

    def test_half_pixels_differ_by_two(self):
        a = np.full((8, 8, 3), 100, dtype=np.float64)
        b = a.copy()
        b[:4] += 2
        assert psnr(a, b) == pytest.approx(10 * np.log10(255**2 / 2.0), abs=1e-9)

    def test_symmetric(self):
        a, b = random_image(rng_global), random_image(rng_global)
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(7)
        base = random_image(rng, 64, 64).astype(np.float64)
        values = []
        for s in (5, 10, 20, 40):
            noisy = np.clip(base + rng.normal(0, s, base.shape), 0, 255)
            values.append(psnr(base, noisy))
        assert values[0] > values[1] > values[2] > values[3]

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestSsim:
    def test_identical(self):
        img = random_image(rng_global)
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_negative(self):
        img = synth.make_skin_texture(seed=1, size=32).pixels
        assert ssim(img, 255 - img) < 0.0

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(11)
        for _ in range(3):
            a, b = random_image(rng), random_image(rng)
            assert ssim(a, b) == pytest.approx(oracle_ssim(a, b), abs=1e-9)

    def test_symmetric(self):
        a, b = random_image(rng_global), random_image(rng_global)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small(self):
        with pytest.raises(MetricError):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


class TestMsSsim:
    def test_identical(self):
        img = synth.make_skin_texture(seed=3, size=192).pixels
        assert ms_ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_weights_normalized(self):
        rng = np.random.default_rng(5)
        a = random_image(rng, 192, 192)
        b = random_image(rng, 192, 192)
        w = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
        assert abs(w.sum() - 1.0001) < 1e-12
        assert ms_ssim(a, b, weights=w) == pytest.approx(
            ms_ssim(a, b, weights=w / w.sum()), abs=1e-12)

    def test_nonnegative_on_renders(self, small_head):
        from headqa.render import Camera, render_pair
        from headqa import distortion
        cam = Camera("front", 192, 192)
        noisy = distortion.add_geometry_noise(small_head, 0.2, seed=1)
        ref, dist = render_pair(small_head, noisy, cam)
        assert ms_ssim(ref.image, dist.image) >= 0.0

    def test_too_small(self):
        with pytest.raises(MetricError):
            ms_ssim(np.zeros((128, 128, 3)), np.zeros((128, 128, 3)))


class TestGmsd:
    def test_identical_zero(self):
        img = random_image(rng_global, 40, 40)
        assert gmsd(img, img) == 0.0

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(13)
        for _ in range(2):
            a, b = random_image(rng, 24, 24), random_image(rng, 24, 24)
            assert gmsd(a, b) == pytest.approx(oracle_gmsd(a, b), abs=1e-9)

    def test_uniform_shift_near_zero(self):
        img = synth.make_skin_texture(seed=4, size=64).pixels.astype(np.float64)
        assert gmsd(img, img + 10) < 0.01

    def test_symmetric(self):
        a, b = random_image(rng_global, 30, 30), random_image(rng_global, 30, 30)
        assert gmsd(a, b) == pytest.approx(gmsd(b, a), abs=1e-12)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

class TestSampling:
    def test_points_inside_triangle(self, single_triangle):
        cloud = sample_point_cloud(single_triangle, 500, seed=1)
        # the fixture triangle lies in z=0 with x,y >= 0, x+y <= 1
        assert np.allclose(cloud.points[:, 2], 0)
        assert (cloud.points[:, 0] >= -1e-12).all()
        assert (cloud.points[:, 1] >= -1e-12).all()
        assert (cloud.points[:, 0] + cloud.points[:, 1] <= 1 + 1e-12).all()

    def test_area_weighting(self, single_triangle):
        mesh = single_triangle.copy()
        # second triangle has legs 3 and 1: area 1.5 = 3x the unit triangle's
        mesh.positions = np.array([
            [0.0, 0, 0], [1, 0, 0], [0, 1, 0],
            [5.0, 0, 0], [8.0, 0, 0], [5.0, 1.0, 0],
        ])
        mesh.uvs = np.vstack([mesh.uvs, mesh.uvs])
        mesh.faces = np.array([
            [[0, 0], [1, 1], [2, 2]],
            [[3, 3], [4, 4], [5, 5]],
        ])
        cloud = sample_point_cloud(mesh, 100_000, seed=3)
        frac_second = np.mean(cloud.points[:, 0] >= 4.0)
        assert abs(frac_second - 0.75) < 0.75 * 0.05

    def test_constant_color(self, single_triangle):
        cloud = sample_point_cloud(single_triangle, 200, seed=2)
        assert (cloud.colors == 200).all()

    def test_determinism(self, small_head):
        a = sample_point_cloud(small_head, 1000, seed=9)
        b = sample_point_cloud(small_head, 1000, seed=9)
        np.testing.assert_array_equal(a.points, b.points)

    def test_zero_area_error(self, single_triangle):
        mesh = single_triangle.copy()
        mesh.positions = np.zeros((3, 3))
        with pytest.raises(MetricError, match="zero-area"):
            sample_point_cloud(mesh, 10, seed=0)


def grid_cloud(n=10, spacing=1.0, color=128):
    xs = np.arange(n) * spacing
    pts = np.array([[x, y, 0.0] for x in xs for y in xs])
    colors = np.full((len(pts), 3), color, dtype=np.uint8)
    return ColoredPointCloud(pts, colors)


class TestP2Point:
    def test_identical_zero(self):
        c = grid_cloud()
        assert p2point_mse(c, c) == 0.0

    def test_small_translation(self):
        ref = grid_cloud(spacing=1.0)
        d = 0.01
        dist = ColoredPointCloud(ref.points + [d, 0, 0], ref.colors)
        assert p2point_mse(ref, dist) == pytest.approx(d * d, rel=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(21)
        ref = ColoredPointCloud(rng.normal(size=(500, 3)),
                                rng.integers(0, 256, (500, 3)).astype(np.uint8))
        dist = ColoredPointCloud(rng.normal(size=(500, 3)),
                                 rng.integers(0, 256, (500, 3)).astype(np.uint8))
        assert p2point_mse(ref, dist) == pytest.approx(oracle_p2point(ref, dist),
                                                       abs=1e-12)

    def test_kdtree_equals_bruteforce_nn(self):
        rng = np.random.default_rng(33)
        for n in (50, 400, 1000):
            a = ColoredPointCloud(rng.normal(size=(n, 3)),
                                  np.zeros((n, 3), dtype=np.uint8))
            q = rng.normal(size=(77, 3))
            d_fast, i_fast = metrics._nearest(a, q)
            d2_slow, i_slow = oracle_nn_sq(q, a.points)
            np.testing.assert_allclose(d_fast**2, d2_slow, atol=1e-12)
            np.testing.assert_array_equal(i_fast, i_slow)


class TestP2Plane:
    def test_identical_zero(self):
        c = grid_cloud(n=5)
        assert p2plane_mse(c, c) == 0.0

    def test_normal_shift(self):
        ref = grid_cloud(n=6, spacing=1.0)
        d = 0.05
        dist = ColoredPointCloud(ref.points + [0, 0, d], ref.colors)
        assert p2plane_mse(ref, dist) == pytest.approx(d * d, rel=1e-9)

    def test_inplane_shift_is_invisible(self):
        ref = grid_cloud(n=8, spacing=1.0)
        d = 0.3  # nearest neighbors stay distinct but displacement is in-plane
        dist = ColoredPointCloud(ref.points + [d, 0, 0], ref.colors)
        assert p2plane_mse(ref, dist) < 1e-18
        assert p2point_mse(ref, dist) > 0.0

    def test_too_few_points(self):
        c = grid_cloud(n=3)  # 9 points < 13
        with pytest.raises(MetricError, match="at least 13"):
            p2plane_mse(c, c)

    def test_planar_normals(self):
        c = grid_cloud(n=6)
        normals = estimate_normals(c)
        assert np.allclose(np.abs(normals[:, 2]), 1.0, atol=1e-9)


class TestPsnrYuv:
    def test_identical_cap(self):
        c = grid_cloud()
        assert psnr_yuv(c, c) == 100.0

    def test_plus_one_luma(self):
        ref = grid_cloud(color=100)
        dist = ColoredPointCloud(ref.points.copy(),
                                 np.full_like(ref.colors, 101))
        expected = 10 * np.log10(255**2 / (6.0 / 8.0))
        assert psnr_yuv(ref, dist) == pytest.approx(expected, abs=1e-9)
        assert psnr_yuv(ref, dist) == pytest.approx(49.38, abs=1e-2)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(44)
        ref = ColoredPointCloud(rng.normal(size=(200, 3)),
                                rng.integers(0, 256, (200, 3)).astype(np.uint8))
        dist = ColoredPointCloud(rng.normal(size=(200, 3)),
                                 rng.integers(0, 256, (200, 3)).astype(np.uint8))
        assert psnr_yuv(ref, dist) == pytest.approx(oracle_psnr_yuv(ref, dist),
                                                    abs=1e-9)
