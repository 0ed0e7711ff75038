"""Textured-mesh and image containers plus OBJ / PPM / PNG file support.

The OBJ subset understood here is deliberately small: ``v``, ``vt`` and
triangular-or-larger ``f`` records whose corners carry the mandatory
``position/uv`` index pair. Normals, materials, groups and smoothing
statements are skipped with a single warning per keyword. Faces with more
than three corners are fan-triangulated on load.

Texture location convention: a mesh at ``<stem>.obj`` keeps its texture at
``<stem>.ppm`` or ``<stem>.png`` in the same directory (PPM is checked
first). ``load_mesh`` also accepts an explicit texture path.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage


class MeshError(ValueError):
    """Invalid mesh data or unreadable/unwritable mesh file."""


@dataclass
class TextureImage:
    """Row-major 8-bit RGB raster, stored as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise MeshError(f"texture must be (h, w, 3), got {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise MeshError("texture must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "TextureImage":
        return TextureImage(self.pixels.copy())


@dataclass
class BoundingBox:
    min: np.ndarray
    max: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))

    @property
    def center(self) -> np.ndarray:
        return (self.min + self.max) / 2.0


@dataclass
class TexturedMesh:
    """Triangle mesh with per-corner UVs and an attached texture.

    faces has shape (n_faces, 3, 2); ``faces[f, c]`` is the
    (position index, uv index) pair of corner ``c``.
    """

    positions: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray
    texture: TextureImage
    name: str = field(default="mesh")

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3, 2)
        self.validate()

    def validate(self) -> None:
        if len(self.faces):
            pos_idx = self.faces[:, :, 0]
            uv_idx = self.faces[:, :, 1]
            if pos_idx.min() < 0 or pos_idx.max() >= len(self.positions):
                raise MeshError("face position index out of range")
            if uv_idx.min() < 0 or uv_idx.max() >= len(self.uvs):
                raise MeshError("face uv index out of range")
        if len(self.uvs) and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
            raise MeshError("uv coordinates outside [0,1]")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TexturedMesh":
        return TexturedMesh(
            self.positions.copy(),
            self.uvs.copy(),
            self.faces.copy(),
            self.texture.copy(),
            name=self.name,
        )


def bounding_box(mesh: TexturedMesh) -> BoundingBox:
    """Componentwise min/max over all positions."""
    if len(mesh.positions) == 0:
        raise MeshError("bounding box of a mesh with no positions")
    return BoundingBox(mesh.positions.min(axis=0), mesh.positions.max(axis=0))


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> TextureImage:
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"image file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        return _read_ppm(path)
    if suffix == ".png":
        with PILImage.open(path) as im:
            return TextureImage(np.asarray(im.convert("RGB"), dtype=np.uint8))
    raise MeshError(f"unsupported texture format: {path.name} (expected .ppm or .png)")


def save_image(image: TextureImage, path: str | Path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        _write_ppm(image, path)
    elif suffix == ".png":
        PILImage.fromarray(image.pixels, mode="RGB").save(path)
    else:
        raise MeshError(f"unsupported texture format: {path.name} (expected .ppm or .png)")


def _read_ppm(path: Path) -> TextureImage:
    data = path.read_bytes()
    if not data.startswith(b"P6"):
        raise MeshError(f"{path.name}: not a binary PPM (P6) file")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise MeshError(f"{path.name}: malformed PPM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise MeshError(f"{path.name}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise MeshError(f"{path.name}: truncated PPM raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return TextureImage(pixels.copy())


def _write_ppm(image: TextureImage, path: Path) -> None:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    path.write_bytes(header + image.pixels.tobytes())


# ---------------------------------------------------------------------------
# OBJ subset
# ---------------------------------------------------------------------------

_IGNORED_OBJ_KEYWORDS = {"vn", "vp", "g", "o", "s", "usemtl", "mtllib", "l", "p"}


def load_mesh(path: str | Path, texture_path: str | Path | None = None) -> TexturedMesh:
    """Parse the OBJ subset and attach the texture. UVs are clamped to [0,1]."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")

    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[list[int]]] = []
    warned: set[str] = set()

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        keyword = parts[0]
        if keyword == "v":
            if len(parts) < 4:
                raise MeshError(f"{path.name}:{lineno}: malformed vertex line")
            positions.append([float(x) for x in parts[1:4]])
        elif keyword == "vt":
            if len(parts) < 3:
                raise MeshError(f"{path.name}:{lineno}: malformed uv line")
            uvs.append([float(x) for x in parts[1:3]])
        elif keyword == "f":
            corners = []
            for token in parts[1:]:
                idx = token.split("/")
                if len(idx) < 2 or idx[0] == "" or idx[1] == "":
                    raise MeshError(
                        f"{path.name}:{lineno}: face corner '{token}' lacks a uv index"
                    )
                vi, ti = int(idx[0]), int(idx[1])
                # OBJ indices are 1-based; negative indices count from the end.
                vi = vi - 1 if vi > 0 else len(positions) + vi
                ti = ti - 1 if ti > 0 else len(uvs) + ti
                corners.append([vi, ti])
            if len(corners) < 3:
                raise MeshError(f"{path.name}:{lineno}: face with fewer than 3 corners")
            for c in range(1, len(corners) - 1):
                faces.append([corners[0], corners[c], corners[c + 1]])
        elif keyword in _IGNORED_OBJ_KEYWORDS:
            if keyword not in warned:
                warnings.warn(f"{path.name}: ignoring '{keyword}' records", stacklevel=2)
                warned.add(keyword)
        else:
            raise MeshError(f"{path.name}:{lineno}: unsupported OBJ keyword '{keyword}'")

    if texture_path is not None:
        texture = load_image(texture_path)
    else:
        texture = _find_texture(path)

    positions_arr = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    uvs_arr = np.clip(np.asarray(uvs, dtype=np.float64).reshape(-1, 2), 0.0, 1.0)
    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3, 2)
    if len(faces_arr):
        if faces_arr[:, :, 0].min() < 0 or faces_arr[:, :, 0].max() >= len(positions_arr):
            raise MeshError(f"{path.name}: face position index out of range")
        if faces_arr[:, :, 1].min() < 0 or faces_arr[:, :, 1].max() >= len(uvs_arr):
            raise MeshError(f"{path.name}: face uv index out of range")
    return TexturedMesh(positions_arr, uvs_arr, faces_arr, texture, name=path.stem)


def _find_texture(obj_path: Path) -> TextureImage:
    for suffix in (".ppm", ".png"):
        candidate = obj_path.with_suffix(suffix)
        if candidate.is_file():
            return load_image(candidate)
    raise MeshError(
        f"no texture found for {obj_path.name} "
        f"(expected {obj_path.stem}.ppm or {obj_path.stem}.png alongside it)"
    )


def save_mesh(mesh: TexturedMesh, path: str | Path, texture_format: str = "ppm") -> None:
    """Write ``<path>`` (OBJ, 6 decimal digits) and its sibling texture file."""
    path = Path(path)
    if texture_format not in ("ppm", "png"):
        raise MeshError(f"unsupported texture format: {texture_format}")
    mesh.validate()
    lines = [f"# headqa mesh: {mesh.name}"]
    for p in mesh.positions:
        lines.append(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.6f} {t[1]:.6f}")
    for f in mesh.faces:
        corners = " ".join(f"{c[0] + 1}/{c[1] + 1}" for c in f)
        lines.append(f"f {corners}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise MeshError(f"cannot write mesh file {path}: {exc}") from exc
    save_image(mesh.texture, path.with_suffix(f".{texture_format}"))
