"""Procedural stand-ins for scanned head meshes.

The real capture data is not shipped with the workbench, so tests and demo
runs build heads from a curved parametric shell: a partial sphere whose
radius field carries nose/brow/cheek bumps drawn from a seeded RNG. The
shell is single-chart (one UV per vertex, no seams), which keeps every
distortion family applicable.
"""

from __future__ import annotations

import numpy as np

from .mesh_io import TexturedMesh, TextureImage
from .utils import round_half_up


def make_head(seed: int = 0, grid: int = 24, texture_size: int = 256,
              name: str | None = None) -> TexturedMesh:
    """Build one synthetic textured head shell.

    grid controls tessellation (faces = 2 * grid^2); texture_size must be
    divisible by 16 so texture distortions stay applicable.
    """
    rng = np.random.default_rng(seed)
    lon = np.linspace(-1.25, 1.25, grid + 1)   # radians, ~±72 degrees
    lat = np.linspace(-1.05, 1.05, grid + 1)
    theta, phi = np.meshgrid(lon, lat, indexing="ij")

    nose_amp = 0.18 + 0.08 * rng.random()
    brow_amp = 0.05 + 0.04 * rng.random()
    cheek_amp = 0.06 + 0.05 * rng.random()
    chin_amp = 0.08 + 0.05 * rng.random()
    radius = (
        1.0
        + nose_amp * np.exp(-(theta**2 / 0.02 + (phi + 0.15) ** 2 / 0.05))
        + brow_amp * np.exp(-((np.abs(theta) - 0.35) ** 2 / 0.02 + (phi - 0.35) ** 2 / 0.03))
        + cheek_amp * np.exp(-((np.abs(theta) - 0.55) ** 2 / 0.05 + (phi + 0.35) ** 2 / 0.08))
        + chin_amp * np.exp(-(theta**2 / 0.05 + (phi + 0.85) ** 2 / 0.04))
        + 0.02 * np.sin(3.0 * theta + rng.uniform(0, 6.28)) * np.cos(2.0 * phi)
    )

    x = radius * np.sin(theta) * np.cos(phi)
    y = radius * np.sin(phi)
    z = radius * np.cos(theta) * np.cos(phi)
    positions = np.stack([x, y, z], axis=-1).reshape(-1, 3)

    u = (theta - lon[0]) / (lon[-1] - lon[0])
    v = (phi - lat[0]) / (lat[-1] - lat[0])
    uvs = np.stack([u, v], axis=-1).reshape(-1, 2)
    uvs = np.clip(uvs, 0.0, 1.0)

    faces = []
    n = grid + 1
    for i in range(grid):
        for j in range(grid):
            a = i * n + j
            b = (i + 1) * n + j
            c = (i + 1) * n + j + 1
            d = i * n + j + 1
            faces.append([[a, a], [b, b], [c, c]])
            faces.append([[a, a], [c, c], [d, d]])
    faces_arr = np.asarray(faces, dtype=np.int64)

    texture = make_skin_texture(seed=seed + 7919, size=texture_size)
    return TexturedMesh(positions, uvs, faces_arr, texture,
                        name=name or f"head{seed}")


def make_skin_texture(seed: int = 0, size: int = 256) -> TextureImage:
    """Skin-toned texture with low, mid and high frequency content.

    The mix matters: texture down-sampling and compression levels must each
    remove something visible, so every octave carries energy.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    fx, fy = xx / size, yy / size

    base = np.array([205.0, 160.0, 135.0]) + rng.uniform(-15, 15, size=3)
    img = np.ones((size, size, 3)) * base
    img += 25.0 * np.sin(2 * np.pi * (1.5 * fx + rng.random()))[..., None]
    img += 18.0 * np.sin(2 * np.pi * (9.0 * fy + rng.random()))[..., None] * np.array([1.0, 0.6, 0.4])
    img += 12.0 * np.sin(2 * np.pi * (23.0 * (fx + fy)))[..., None] * np.array([0.5, 1.0, 0.7])
    img += rng.normal(0.0, 9.0, size=(size, size, 3))

    # a few darker blotches (moles / shading variation)
    for _ in range(6):
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        r = rng.uniform(0.02, 0.08)
        blot = np.exp(-((fx - cx) ** 2 + (fy - cy) ** 2) / (2 * r * r))
        img -= blot[..., None] * rng.uniform(10, 45)

    return TextureImage(np.clip(round_half_up(img), 0, 255).astype(np.uint8))


def make_icosahedron(radius: float = 1.0, texture_size: int = 64) -> TexturedMesh:
    """Regular icosahedron with per-vertex UVs; closed-surface test fixture."""
    g = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
        [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
        [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
    ], dtype=np.float64)
    verts *= radius / np.linalg.norm(verts[0])
    tris = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    # planar-projection UVs, one per vertex (no seams)
    u = (verts[:, 0] - verts[:, 0].min()) / np.ptp(verts[:, 0])
    v = (verts[:, 1] - verts[:, 1].min()) / np.ptp(verts[:, 1])
    uvs = np.stack([u, v], axis=-1)
    faces = np.stack([tris, tris], axis=-1)
    rng = np.random.default_rng(11)
    tex = TextureImage(rng.integers(60, 200, size=(texture_size, texture_size, 3),
                                    dtype=np.int64).astype(np.uint8))
    return TexturedMesh(verts, uvs, faces, tex, name="icosahedron")
