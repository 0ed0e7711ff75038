"""Four-stage windowed-attention encoder with per-stage pooled features.

Stage 0 embeds non-overlapping 4x4 patches to C channels; each later stage
first merges 2x2 token neighborhoods (doubling channels), so stage k runs
at C*2^k channels on a (side / 4 / 2^k)^2 token grid. A block is
pre-norm window attention plus a pre-norm GELU MLP, both residual. After
every stage the token grid is globally average pooled; the four pooled
vectors concatenate into the 15C quality embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_STAGES = 4
PATCH = 4
MERGE = 2


@dataclass(frozen=True)
class EncoderConfig:
    base_channels: int = 24
    depths: tuple[int, int, int, int] = (1, 1, 1, 1)
    heads: tuple[int, int, int, int] = (1, 2, 4, 8)
    window: int = 4
    image_side: int = 224
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.image_side % 32 != 0:
            raise ValueError(f"image side must be divisible by 32, got {self.image_side}")
        if len(self.depths) != N_STAGES or len(self.heads) != N_STAGES:
            raise ValueError("depths and heads must list exactly 4 stages")
        for k in range(N_STAGES):
            if self.stage_channels(k) % self.heads[k] != 0:
                raise ValueError(
                    f"stage {k} channels {self.stage_channels(k)} not divisible "
                    f"by {self.heads[k]} heads"
                )

    def stage_channels(self, k: int) -> int:
        return self.base_channels * 2**k

    @property
    def embedding_length(self) -> int:
        return sum(self.stage_channels(k) for k in range(N_STAGES))  # 15C

    def to_json(self) -> str:
        return json.dumps({
            "base_channels": self.base_channels,
            "depths": list(self.depths),
            "heads": list(self.heads),
            "window": self.window,
            "image_side": self.image_side,
            "mlp_ratio": self.mlp_ratio,
        })

    @staticmethod
    def from_json(text: str) -> "EncoderConfig":
        d = json.loads(text)
        return EncoderConfig(
            base_channels=d["base_channels"],
            depths=tuple(d["depths"]),
            heads=tuple(d["heads"]),
            window=d["window"],
            image_side=d["image_side"],
            mlp_ratio=d["mlp_ratio"],
        )


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class QualityEmbedding:
    """Concatenated per-stage pooled features with segment boundaries."""

    vector: Tensor
    segments: list[tuple[int, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return int(self.vector.data.shape[0])


class HierarchicalEncoder:
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, Tensor] = {}

        c0 = config.base_channels
        self._add("patch_embed.w", uniform_init(rng, PATCH * PATCH * 3, (PATCH * PATCH * 3, c0)))
        self._add("patch_embed.b", np.zeros(c0))

        for k in range(N_STAGES):
            ck = config.stage_channels(k)
            if k > 0:
                prev = config.stage_channels(k - 1)
                self._add(f"merge{k}.w", uniform_init(rng, 4 * prev, (4 * prev, ck)))
                self._add(f"merge{k}.b", np.zeros(ck))
            hidden = int(round(config.mlp_ratio * ck))
            for blk in range(config.depths[k]):
                p = f"stage{k}.block{blk}"
                self._add(f"{p}.ln1.g", np.ones(ck))
                self._add(f"{p}.ln1.b", np.zeros(ck))
                self._add(f"{p}.qkv.w", uniform_init(rng, ck, (ck, 3 * ck)))
                self._add(f"{p}.qkv.b", np.zeros(3 * ck))
                self._add(f"{p}.proj.w", uniform_init(rng, ck, (ck, ck)))
                self._add(f"{p}.proj.b", np.zeros(ck))
                self._add(f"{p}.ln2.g", np.ones(ck))
                self._add(f"{p}.ln2.b", np.zeros(ck))
                self._add(f"{p}.mlp1.w", uniform_init(rng, ck, (ck, hidden)))
                self._add(f"{p}.mlp1.b", np.zeros(hidden))
                self._add(f"{p}.mlp2.w", uniform_init(rng, hidden, (hidden, ck)))
                self._add(f"{p}.mlp2.b", np.zeros(ck))
            # stage output norm, applied to tokens before global pooling
            self._add(f"stage{k}.norm.g", np.ones(ck))
            self._add(f"stage{k}.norm.b", np.zeros(ck))

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    # -- forward -------------------------------------------------------------

    def encode(self, image: np.ndarray) -> QualityEmbedding:
        """image: (side, side, 3) float in [0, 1]. Returns the 15C embedding."""
        batched = self.encode_batch(np.asarray(image, dtype=np.float64)[None])
        return QualityEmbedding(
            vector=ad.reshape(batched.vector, (batched.vector.data.shape[1],)),
            segments=batched.segments,
        )

    def encode_batch(self, images: np.ndarray) -> QualityEmbedding:
        """images: (batch, side, side, 3). Returns (batch, 15C) embeddings.

        One call builds one op graph regardless of batch size, which is what
        makes full-batch training affordable.
        """
        side = self.config.image_side
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4 or images.shape[1:] != (side, side, 3):
            raise ValueError(
                f"expected (batch, {side}, {side}, 3) images, got {images.shape}")
        b = images.shape[0]
        x = self._patchify(Tensor(images), b)
        grid = side // PATCH

        pooled: list[Tensor] = []
        segments: list[tuple[int, int]] = []
        offset = 0
        for k in range(N_STAGES):
            if k > 0:
                x, grid = self._merge(x, grid, k, b)
            for blk in range(self.config.depths[k]):
                x = self._block(x, grid, k, blk, b)
            normed = ad.layer_norm(x, self.params[f"stage{k}.norm.g"],
                                   self.params[f"stage{k}.norm.b"])
            alpha = ad.mean(normed, axis=(1, 2))  # global average pool over tokens
            pooled.append(alpha)
            ck = self.config.stage_channels(k)
            segments.append((offset, offset + ck))
            offset += ck
        return QualityEmbedding(vector=ad.concat(pooled, axis=1), segments=segments)

    def _patchify(self, img: Tensor, b: int) -> Tensor:
        side = self.config.image_side
        g = side // PATCH
        x = ad.reshape(img, (b, g, PATCH, g, PATCH, 3))
        x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
        x = ad.reshape(x, (b, g * g, PATCH * PATCH * 3))
        x = ad.linear(x, self.params["patch_embed.w"], self.params["patch_embed.b"])
        return ad.reshape(x, (b, g, g, self.config.base_channels))

    def _merge(self, x: Tensor, grid: int, k: int, b: int) -> tuple[Tensor, int]:
        prev = self.config.stage_channels(k - 1)
        g2 = grid // MERGE
        x = ad.reshape(x, (b, g2, MERGE, g2, MERGE, prev))
        x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
        x = ad.reshape(x, (b, g2 * g2, MERGE * MERGE * prev))
        x = ad.linear(x, self.params[f"merge{k}.w"], self.params[f"merge{k}.b"])
        return ad.reshape(x, (b, g2, g2, self.config.stage_channels(k))), g2

    def _block(self, x: Tensor, grid: int, k: int, blk: int, b: int) -> Tensor:
        p = f"stage{k}.block{blk}"
        ck = self.config.stage_channels(k)
        h = ad.layer_norm(x, self.params[f"{p}.ln1.g"], self.params[f"{p}.ln1.b"])
        h = self._window_attention(h, grid, ck, self.config.heads[k], p, b)
        x = ad.add(x, h)
        h = ad.layer_norm(x, self.params[f"{p}.ln2.g"], self.params[f"{p}.ln2.b"])
        h = ad.linear(h, self.params[f"{p}.mlp1.w"], self.params[f"{p}.mlp1.b"])
        h = ad.gelu(h)
        h = ad.linear(h, self.params[f"{p}.mlp2.w"], self.params[f"{p}.mlp2.b"])
        return ad.add(x, h)

    def _window_attention(self, x: Tensor, grid: int, ck: int, heads: int,
                          prefix: str, b: int) -> Tensor:
        w = effective_window(self.config.window, grid)
        nw = grid // w
        t = w * w
        dh = ck // heads

        # (b, grid, grid, C) -> (b*nW^2, T, C)
        xw = ad.reshape(x, (b, nw, w, nw, w, ck))
        xw = ad.transpose(xw, (0, 1, 3, 2, 4, 5))
        xw = ad.reshape(xw, (b * nw * nw, t, ck))

        qkv = ad.linear(xw, self.params[f"{prefix}.qkv.w"], self.params[f"{prefix}.qkv.b"])
        qkv = ad.reshape(qkv, (b * nw * nw, t, 3, heads, dh))
        qkv = ad.transpose(qkv, (2, 0, 3, 1, 4))  # (3, b*nW^2, heads, T, dh)
        q = ad.getitem(qkv, 0)
        kk = ad.getitem(qkv, 1)
        v = ad.getitem(qkv, 2)

        logits = ad.mul(ad.matmul(q, ad.transpose(kk, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        attn = ad.softmax(logits, axis=-1)
        out = ad.matmul(attn, v)                      # (b*nW^2, heads, T, dh)
        out = ad.transpose(out, (0, 2, 1, 3))
        out = ad.reshape(out, (b * nw * nw, t, ck))
        out = ad.linear(out, self.params[f"{prefix}.proj.w"], self.params[f"{prefix}.proj.b"])

        # back to (b, grid, grid, C)
        out = ad.reshape(out, (b, nw, nw, w, w, ck))
        out = ad.transpose(out, (0, 1, 3, 2, 4, 5))
        return ad.reshape(out, (b, grid, grid, ck))


def effective_window(window: int, grid: int) -> int:
    """Largest divisor of the token-grid side not exceeding the configured
    window, so partitions tile exactly at every stage."""
    w = min(window, grid)
    while grid % w != 0:
        w -= 1
    return w
