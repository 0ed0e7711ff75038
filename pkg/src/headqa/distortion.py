"""The seven distortion families and the reference x family x level grid.

Families and per-level parameters:
  SS   surface simplification, keep rate      {0.4, 0.2, 0.1, 0.05}
  PC   position quantization, bits            {6, 7, 8, 9}
  UMC  uv-coordinate quantization, bits       {7, 8, 9, 10}
  TD   texture down-sampling, divisor         {2, 4, 8, 16}
  TC   texture compression, quality           {3, 10, 15, 20}
  GN   geometry noise, sigma (% of bbox diag) {0.05, 0.1, 0.15, 0.2}
  CN   color noise, sigma (8-bit units)       {20, 40, 60, 80}

Note the parameter lists run in different severity directions: GN/CN/TD
grow harsher with level index while SS/PC/UMC/TC grow milder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jpeg import compress_texture
from .mesh_io import MeshError, TexturedMesh, TextureImage, bounding_box
from .simplify import simplify_surface
from .utils import derive_seed, round_half_up

FAMILY_PARAMS: dict[str, list] = {
    "SS": [0.4, 0.2, 0.1, 0.05],
    "PC": [6, 7, 8, 9],
    "UMC": [7, 8, 9, 10],
    "TD": [2, 4, 8, 16],
    "TC": [3, 10, 15, 20],
    "GN": [0.05, 0.1, 0.15, 0.2],
    "CN": [20, 40, 60, 80],
}

NOISE_FAMILIES = ("GN", "CN")

# geometry-noise std = sigma_g * GN_SIGMA_SCALE * bbox diagonal; the source
# material leaves sigma units open, so this stays a config knob
GN_SIGMA_SCALE = 0.01


@dataclass(frozen=True)
class DistortionSpec:
    family: str
    level: int
    parameter: float
    seed: int | None = None

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise ValueError(f"unknown distortion family '{self.family}'")
        if not 0 <= self.level <= 3:
            raise ValueError(f"level must be 0..3, got {self.level}")
        expected = FAMILY_PARAMS[self.family][self.level]
        if self.parameter != expected:
            raise ValueError(
                f"{self.family} level {self.level} must use parameter "
                f"{expected}, got {self.parameter}"
            )
        if self.family in NOISE_FAMILIES and self.seed is None:
            raise ValueError(f"{self.family} requires a seed")

    @property
    def tag(self) -> str:
        return f"{self.family}_{self.level + 1}"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "level": self.level,
            "parameter": self.parameter,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "DistortionSpec":
        return DistortionSpec(d["family"], d["level"], d["parameter"], d.get("seed"))


def make_spec(family: str, level: int, seed: int | None = None) -> DistortionSpec:
    return DistortionSpec(family, level, FAMILY_PARAMS[family][level], seed)


# ---------------------------------------------------------------------------
# geometry / uv families
# ---------------------------------------------------------------------------

def quantize_positions(mesh: TexturedMesh, qp_bits: int) -> TexturedMesh:
    """Snap each axis onto a uniform 2^qp grid spanning its bounding range."""
    if not 1 <= qp_bits <= 30:
        raise MeshError(f"qp_bits must be in [1, 30], got {qp_bits}")
    if len(mesh.positions) == 0:
        raise MeshError("cannot quantize an empty mesh")
    out = mesh.copy()
    lo = mesh.positions.min(axis=0)
    hi = mesh.positions.max(axis=0)
    out.positions = _quantize_grid(mesh.positions, lo, hi, qp_bits)
    return out


def quantize_uvs(mesh: TexturedMesh, qt_bits: int) -> TexturedMesh:
    """Same grid rule as positions, over the fixed [0, 1] uv range."""
    if not 1 <= qt_bits <= 30:
        raise MeshError(f"qt_bits must be in [1, 30], got {qt_bits}")
    out = mesh.copy()
    lo = np.zeros(2)
    hi = np.ones(2)
    out.uvs = _quantize_grid(mesh.uvs, lo, hi, qt_bits)
    return out


def _quantize_grid(values: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                   bits: int) -> np.ndarray:
    steps = float(2**bits - 1)
    span = hi - lo
    out = values.copy()
    for axis in range(values.shape[1]):
        if span[axis] == 0.0:
            continue  # degenerate axis passes through unchanged
        q = round_half_up((values[:, axis] - lo[axis]) / span[axis] * steps)
        out[:, axis] = lo[axis] + q / steps * span[axis]
    return out


def add_geometry_noise(mesh: TexturedMesh, sigma_g: float, seed: int,
                       sigma_scale: float | None = None) -> TexturedMesh:
    """I.i.d. Gaussian displacement per coordinate, scaled to mesh size."""
    if sigma_scale is None:
        sigma_scale = GN_SIGMA_SCALE
    if sigma_g < 0:
        raise MeshError(f"sigma_g must be nonnegative, got {sigma_g}")
    diag = bounding_box(mesh).diagonal
    if diag == 0.0:
        raise MeshError("geometry noise undefined for a degenerate bounding box")
    out = mesh.copy()
    if sigma_g == 0.0:
        return out
    std = sigma_g * sigma_scale * diag
    rng = np.random.default_rng(seed)
    out.positions = mesh.positions + rng.standard_normal(mesh.positions.shape) * std
    return out


# ---------------------------------------------------------------------------
# texture families
# ---------------------------------------------------------------------------

def downsample_texture(texture: TextureImage, divisor: int) -> TextureImage:
    """Box-filter decimation; the result stays at the reduced resolution."""
    if divisor not in (2, 4, 8, 16):
        raise MeshError(f"divisor must be one of 2, 4, 8, 16, got {divisor}")
    if texture.width % divisor or texture.height % divisor:
        raise MeshError(
            f"texture {texture.width}x{texture.height} not divisible by {divisor}"
        )
    h, w = texture.height // divisor, texture.width // divisor
    blocks = texture.pixels.astype(np.float64).reshape(h, divisor, w, divisor, 3)
    mean = blocks.mean(axis=(1, 3))
    return TextureImage(np.clip(round_half_up(mean), 0, 255).astype(np.uint8))


def add_color_noise(texture: TextureImage, sigma_c: float, seed: int) -> TextureImage:
    """I.i.d. Gaussian noise in 8-bit units per channel per texel."""
    if sigma_c < 0:
        raise MeshError(f"sigma_c must be nonnegative, got {sigma_c}")
    if sigma_c == 0.0:
        return texture.copy()
    rng = np.random.default_rng(seed)
    noisy = texture.pixels.astype(np.float64) + rng.standard_normal(
        texture.pixels.shape) * sigma_c
    return TextureImage(np.clip(round_half_up(noisy), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# dispatcher and grid
# ---------------------------------------------------------------------------

def apply_distortion(mesh: TexturedMesh, spec: DistortionSpec) -> TexturedMesh:
    if spec.family == "SS":
        return simplify_surface(mesh, spec.parameter)
    if spec.family == "PC":
        return quantize_positions(mesh, int(spec.parameter))
    if spec.family == "UMC":
        return quantize_uvs(mesh, int(spec.parameter))
    if spec.family == "TD":
        out = mesh.copy()
        out.texture = downsample_texture(mesh.texture, int(spec.parameter))
        return out
    if spec.family == "TC":
        out = mesh.copy()
        out.texture = compress_texture(mesh.texture, int(spec.parameter))
        return out
    if spec.family == "GN":
        return add_geometry_noise(mesh, spec.parameter, spec.seed)
    if spec.family == "CN":
        out = mesh.copy()
        out.texture = add_color_noise(mesh.texture, spec.parameter, spec.seed)
        return out
    raise ValueError(f"unknown distortion family '{spec.family}'")


def generate_grid(references: list[TexturedMesh], seed: int = 0,
                  ) -> list[tuple[DistortionSpec, TexturedMesh]]:
    """Apply every family at every level to every reference.

    Noise seeds derive from (master seed, reference name, family, level),
    so outputs are reproducible regardless of processing order.
    """
    if not references:
        raise MeshError("at least one reference mesh is required")
    out: list[tuple[DistortionSpec, TexturedMesh]] = []
    for ref in references:
        for family in FAMILY_PARAMS:
            for level in range(4):
                sub_seed = None
                if family in NOISE_FAMILIES:
                    sub_seed = derive_seed(seed, ref.name, family, level)
                spec = make_spec(family, level, sub_seed)
                distorted = apply_distortion(ref, spec)
                distorted.name = f"{ref.name}__{spec.tag}"
                out.append((spec, distorted))
    return out
