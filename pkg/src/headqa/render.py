"""Deterministic orthographic software rasterizer.

Produces the front and left projections used for rating and feature
extraction. Depth is resolved with a strictly-closer z-test over faces
processed in index order, so output is bit-identical across runs. Texture
lookups are bilinear; shading is a two-sided Lambertian headlight (light
direction equals the view direction) over flat face normals.

View conventions (right, up, toward-camera in world axes):
  front: +x, +y, +z
  left:  +z, +y, -x
so rotating a mesh by +90 degrees about +y and rendering "front" equals
rendering the original mesh from "left".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh_io import TexturedMesh, TextureImage, bounding_box
from .utils import round_half_up

_VIEW_BASES = {
    "front": (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])),
    "left": (np.array([0, 0, 1.0]), np.array([0, 1.0, 0]), np.array([-1.0, 0, 0])),
}

BACKGROUND = np.array([255, 255, 255], dtype=np.uint8)


class RenderError(ValueError):
    """Unrenderable input (empty mesh, bad camera)."""


@dataclass(frozen=True)
class Camera:
    view: str = "front"
    width: int = 270
    height: int = 480
    fill: float = 0.9  # bounding sphere fills this fraction of the short side

    def __post_init__(self):
        if self.view not in _VIEW_BASES:
            raise RenderError(f"unknown view '{self.view}' (expected front or left)")
        if self.width < 8 or self.height < 8:
            raise RenderError("camera dimensions must be at least 8x8")


@dataclass(frozen=True)
class ShadingConfig:
    ambient: float = 0.3
    diffuse: float = 0.7


@dataclass(frozen=True)
class Framing:
    """Orthographic framing: world-space center and pixels-per-unit scale."""

    center: np.ndarray
    pixels_per_unit: float


@dataclass
class ProjectionImage:
    image: TextureImage
    mesh_id: str
    camera: Camera
    meta: dict = field(default_factory=dict)


def framing_for(mesh: TexturedMesh, camera: Camera) -> Framing:
    """Center on the bounding-sphere center, scale sphere to the fill factor."""
    box = bounding_box(mesh)
    center = box.center
    radius = float(np.max(np.linalg.norm(mesh.positions - center, axis=1)))
    if radius <= 0.0:
        radius = 1.0  # single point or degenerate mesh: arbitrary finite scale
    scale = camera.fill * min(camera.width, camera.height) / (2.0 * radius)
    return Framing(center=center, pixels_per_unit=scale)


def render(mesh: TexturedMesh, camera: Camera,
           shading: ShadingConfig = ShadingConfig(),
           framing: Framing | None = None) -> ProjectionImage:
    """Rasterize one mesh. Empty meshes are an error, never a blank image."""
    if mesh.n_faces == 0 or len(mesh.positions) == 0:
        raise RenderError(f"mesh '{mesh.name}' has no renderable faces")
    if framing is None:
        framing = framing_for(mesh, camera)

    right, up, toward = _VIEW_BASES[camera.view]
    rel = mesh.positions - framing.center
    s = framing.pixels_per_unit
    px = rel @ right * s + camera.width / 2.0
    py = camera.height / 2.0 - rel @ up * s
    pz = rel @ toward  # closeness: larger = nearer to camera

    tex = mesh.texture.pixels.astype(np.float64)
    th, tw = tex.shape[0], tex.shape[1]

    color = np.empty((camera.height, camera.width, 3), dtype=np.float64)
    color[:] = BACKGROUND
    zbuf = np.full((camera.height, camera.width), -np.inf)

    pos = mesh.positions
    # canonical processing order: equal-depth overlaps resolve to the same
    # winner no matter how the caller ordered the face list
    face_order = np.lexsort(tuple(mesh.faces.reshape(-1, 6).T[::-1]))
    for f in mesh.faces[face_order]:
        vi = f[:, 0]
        ti = f[:, 1]
        ax, ay = px[vi[0]], py[vi[0]]
        bx, by = px[vi[1]], py[vi[1]]
        cx, cy = px[vi[2]], py[vi[2]]

        denom = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
        if denom == 0.0:
            continue  # edge-on in projection; contributes no area

        x0 = max(0, int(np.floor(min(ax, bx, cx) - 0.5)))
        x1 = min(camera.width - 1, int(np.ceil(max(ax, bx, cx) - 0.5)))
        y0 = max(0, int(np.floor(min(ay, by, cy) - 0.5)))
        y1 = min(camera.height - 1, int(np.ceil(max(ay, by, cy) - 0.5)))
        if x1 < x0 or y1 < y0:
            continue

        gx = np.arange(x0, x1 + 1) + 0.5
        gy = np.arange(y0, y1 + 1) + 0.5
        qx, qy = np.meshgrid(gx, gy)

        l0 = ((bx - qx) * (cy - qy) - (cx - qx) * (by - qy)) / denom
        l1 = ((cx - qx) * (ay - qy) - (ax - qx) * (cy - qy)) / denom
        l2 = 1.0 - l0 - l1
        inside = (l0 >= 0.0) & (l1 >= 0.0) & (l2 >= 0.0)
        if not inside.any():
            continue

        depth = l0 * pz[vi[0]] + l1 * pz[vi[1]] + l2 * pz[vi[2]]
        zview = zbuf[y0:y1 + 1, x0:x1 + 1]
        wins = inside & (depth > zview)
        if not wins.any():
            continue

        # flat Lambertian headlight, two-sided so winding does not matter
        e1 = pos[vi[1]] - pos[vi[0]]
        e2 = pos[vi[2]] - pos[vi[0]]
        n = np.cross(e1, e2)
        nn = np.linalg.norm(n)
        lambert = abs(np.dot(n / nn, toward)) if nn > 0 else 0.0
        intensity = shading.ambient + shading.diffuse * lambert

        uv = (l0[wins, None] * mesh.uvs[ti[0]]
              + l1[wins, None] * mesh.uvs[ti[1]]
              + l2[wins, None] * mesh.uvs[ti[2]])
        texel = _bilinear(tex, tw, th, uv)

        zview[wins] = depth[wins]
        cview = color[y0:y1 + 1, x0:x1 + 1]
        cview[wins] = texel * intensity

    out = np.clip(round_half_up(color), 0, 255).astype(np.uint8)
    return ProjectionImage(
        image=TextureImage(out),
        mesh_id=mesh.name,
        camera=camera,
        meta={
            "view": camera.view,
            "ambient": shading.ambient,
            "diffuse": shading.diffuse,
            "center": [float(c) for c in framing.center],
            "pixels_per_unit": framing.pixels_per_unit,
        },
    )


def render_pair(reference: TexturedMesh, distorted: TexturedMesh, camera: Camera,
                shading: ShadingConfig = ShadingConfig()) -> tuple[ProjectionImage, ProjectionImage]:
    """Render both meshes with framing locked to the reference bounding sphere.

    Geometric distortions therefore show up as image change instead of being
    normalized away by refitting the camera to the distorted mesh.
    """
    framing = framing_for(reference, camera)
    ref_img = render(reference, camera, shading, framing)
    dist_img = render(distorted, camera, shading, framing)
    return ref_img, dist_img


def _bilinear(tex: np.ndarray, tw: int, th: int, uv: np.ndarray) -> np.ndarray:
    """Sample RGB at UV points; u right, v up (v=0 is the bottom texel row)."""
    x = np.clip(uv[:, 0], 0.0, 1.0) * (tw - 1)
    y = (1.0 - np.clip(uv[:, 1], 0.0, 1.0)) * (th - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, tw - 1)
    y1 = np.minimum(y0 + 1, th - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    top = tex[y0, x0] * (1 - fx) + tex[y0, x1] * fx
    bot = tex[y1, x0] * (1 - fx) + tex[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(image: TextureImage, width: int, height: int) -> TextureImage:
    """Bilinear resize (half-texel centers, so same-size resize is exact)."""
    tex = image.pixels.astype(np.float64)
    x = np.clip((np.arange(width) + 0.5) * image.width / width - 0.5, 0, image.width - 1)
    y = np.clip((np.arange(height) + 0.5) * image.height / height - 0.5, 0, image.height - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, image.width - 1)
    y1 = np.minimum(y0 + 1, image.height - 1)
    fx = (x - x0)[None, :, None]
    fy = (y - y0)[:, None, None]
    top = tex[y0[:, None], x0[None, :]] * (1 - fx) + tex[y0[:, None], x1[None, :]] * fx
    bot = tex[y1[:, None], x0[None, :]] * (1 - fx) + tex[y1[:, None], x1[None, :]] * fx
    out = top * (1 - fy) + bot * fy
    return TextureImage(np.clip(round_half_up(out), 0, 255).astype(np.uint8))
