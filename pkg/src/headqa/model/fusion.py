"""Reference-guided attention fusion and the full quality model.

The four per-stage segments of each embedding are projected to a common
width d, giving a 4-token sequence per side. Multi-head attention uses
the reference sequence as queries and the distorted sequence as keys and
values; its pooled output F_a joins the two raw embeddings in the final
quality vector, which a two-layer rectifier head regresses to a score.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import (EncoderConfig, HierarchicalEncoder, N_STAGES,
                      QualityEmbedding, uniform_init)


@dataclass(frozen=True)
class FusionConfig:
    dim: int = 64          # common projection width d
    heads: int = 4
    hidden: int = 128      # FC head hidden width
    token_mode: str = "stages"  # "stages": 4 tokens per side; "pooled": 1 token

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.token_mode not in ("stages", "pooled"):
            raise ValueError(f"unknown token mode '{self.token_mode}'")

    def to_json(self) -> str:
        return json.dumps({
            "dim": self.dim, "heads": self.heads, "hidden": self.hidden,
            "token_mode": self.token_mode,
        })

    @staticmethod
    def from_json(text: str) -> "FusionConfig":
        d = json.loads(text)
        return FusionConfig(dim=d["dim"], heads=d["heads"], hidden=d["hidden"],
                            token_mode=d["token_mode"])


class FusionHead:
    def __init__(self, encoder_config: EncoderConfig, config: FusionConfig,
                 rng: np.random.Generator):
        self.config = config
        self.encoder_config = encoder_config
        self.params: dict[str, Tensor] = {}
        d = config.dim

        if config.token_mode == "stages":
            for k in range(N_STAGES):
                ck = encoder_config.stage_channels(k)
                self._add(f"proj{k}.w", uniform_init(rng, ck, (ck, d)))
                self._add(f"proj{k}.b", np.zeros(d))
        else:
            full = encoder_config.embedding_length
            self._add("proj_all.w", uniform_init(rng, full, (full, d)))
            self._add("proj_all.b", np.zeros(d))

        for name in ("wq", "wk", "wv", "wo"):
            self._add(f"attn.{name}", uniform_init(rng, d, (d, d)))
            self._add(f"attn.{name}_b", np.zeros(d))

        fq_len = 2 * encoder_config.embedding_length + d
        self._add("fc1.w", uniform_init(rng, fq_len, (fq_len, config.hidden)))
        self._add("fc1.b", np.zeros(config.hidden))
        self._add("fc2.w", uniform_init(rng, config.hidden, (config.hidden, 1)))
        self._add("fc2.b", np.zeros(1))

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    # -- ops -------------------------------------------------------------

    def _tokens(self, emb: QualityEmbedding, b: int) -> Tensor:
        """Project per-stage segments to width d; returns (b, tokens, d)."""
        if self.config.token_mode == "pooled":
            full = emb.vector.data.shape[-1]
            row = ad.reshape(emb.vector, (b, 1, full))
            return ad.linear(row, self.params["proj_all.w"], self.params["proj_all.b"])
        rows = []
        for k, (lo, hi) in enumerate(emb.segments):
            seg = ad.getitem(emb.vector, (slice(None), slice(lo, hi)))
            seg = ad.linear(seg, self.params[f"proj{k}.w"], self.params[f"proj{k}.b"])
            rows.append(ad.reshape(seg, (b, 1, self.config.dim)))
        return ad.concat(rows, axis=1)

    def fuse(self, ref: QualityEmbedding, dist: QualityEmbedding) -> Tensor:
        """Cross attention (queries from the reference) then concatenation."""
        if ref.length != dist.length:
            raise ValueError(f"embedding lengths differ: {ref.length} vs {dist.length}")
        batched = self.fuse_batch(_as_batch(ref), _as_batch(dist))
        return ad.reshape(batched, (batched.data.shape[1],))

    def fuse_batch(self, ref: QualityEmbedding, dist: QualityEmbedding) -> Tensor:
        """Batched fusion: vectors (b, 15C) in, quality vectors (b, 30C+d) out."""
        d = self.config.dim
        heads = self.config.heads
        dh = d // heads
        b = ref.vector.data.shape[0]

        r_tokens = self._tokens(ref, b)   # (b, T, d)
        d_tokens = self._tokens(dist, b)
        t = r_tokens.data.shape[1]

        q = ad.linear(r_tokens, self.params["attn.wq"], self.params["attn.wq_b"])
        k = ad.linear(d_tokens, self.params["attn.wk"], self.params["attn.wk_b"])
        v = ad.linear(d_tokens, self.params["attn.wv"], self.params["attn.wv_b"])

        def split(x):  # (b, T, d) -> (b, heads, T, dh)
            return ad.transpose(ad.reshape(x, (b, t, heads, dh)), (0, 2, 1, 3))

        qh, kh, vh = split(q), split(k), split(v)
        logits = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        attn = ad.softmax(logits, axis=-1)
        out = ad.matmul(attn, vh)                       # (b, heads, T, dh)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, t, d))
        out = ad.linear(out, self.params["attn.wo"], self.params["attn.wo_b"])
        fused = ad.mean(out, axis=1)                    # pool tokens -> (b, d)
        return ad.concat([ref.vector, dist.vector, fused], axis=1)

    def attention_weights(self, ref: QualityEmbedding, dist: QualityEmbedding) -> np.ndarray:
        """Softmax rows per head (diagnostic; no gradients)."""
        d, heads = self.config.dim, self.config.heads
        dh = d // heads
        r = self._tokens(_as_batch(ref), 1).data[0]
        dd = self._tokens(_as_batch(dist), 1).data[0]
        q = r @ self.params["attn.wq"].data + self.params["attn.wq_b"].data
        k = dd @ self.params["attn.wk"].data + self.params["attn.wk_b"].data
        t = r.shape[0]
        qh = q.reshape(t, heads, dh).transpose(1, 0, 2)
        kh = k.reshape(t, heads, dh).transpose(1, 0, 2)
        logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, fq: Tensor) -> Tensor:
        """Two-stage FC regression: hidden rectifier layer, then a scalar."""
        row = ad.reshape(fq, (1, fq.data.shape[-1]))
        return self.predict_batch(row)

    def predict_batch(self, fq: Tensor) -> Tensor:
        """(b, |F_q|) quality vectors to (b,) scores."""
        h = ad.relu(ad.linear(fq, self.params["fc1.w"], self.params["fc1.b"]))
        out = ad.linear(h, self.params["fc2.w"], self.params["fc2.b"])
        return ad.reshape(out, (out.data.shape[0],))


def _as_batch(emb: QualityEmbedding) -> QualityEmbedding:
    if emb.vector.data.ndim == 1:
        return QualityEmbedding(
            vector=ad.reshape(emb.vector, (1, emb.length)), segments=emb.segments)
    return emb


def l1_loss(predictions, labels: np.ndarray) -> Tensor:
    """Mean absolute error; subgradient 0 exactly at prediction = label.

    predictions: a (b,) Tensor or a list of scalar Tensors.
    """
    if isinstance(predictions, Tensor):
        preds = predictions
        n = preds.data.shape[0]
    else:
        if len(predictions) == 0:
            raise ValueError("empty batch")
        preds = ad.concat(predictions, axis=0)
        n = len(predictions)
    if n == 0:
        raise ValueError("empty batch")
    if n != len(labels):
        raise ValueError("predictions and labels lengths differ")
    diff = ad.add(preds, Tensor(-np.asarray(labels, dtype=np.float64)))
    return ad.mean(ad.absval(diff))


class QualityModel:
    """Encoder + fusion head with a flat named parameter dictionary."""

    def __init__(self, encoder_config: EncoderConfig,
                 fusion_config: FusionConfig = FusionConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.encoder = HierarchicalEncoder(encoder_config, rng)
        self.head = FusionHead(encoder_config, fusion_config, rng)
        self.seed = seed

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.encoder.config

    @property
    def fusion_config(self) -> FusionConfig:
        return self.head.config

    def parameters(self) -> dict[str, Tensor]:
        out = {f"encoder.{k}": v for k, v in self.encoder.params.items()}
        out.update({f"head.{k}": v for k, v in self.head.params.items()})
        return out

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def predict_pair(self, ref_image: np.ndarray, dist_image: np.ndarray) -> Tensor:
        return self.predict_pairs(np.asarray(ref_image)[None],
                                  np.asarray(dist_image)[None])

    def predict_pairs(self, ref_images: np.ndarray, dist_images: np.ndarray) -> Tensor:
        """Score a batch of aligned (reference, distorted) image pairs."""
        fr = self.encoder.encode_batch(ref_images)
        fd = self.encoder.encode_batch(dist_images)
        fq = self.head.fuse_batch(fr, fd)
        return self.head.predict_batch(fq)

    def score(self, ref_image: np.ndarray, dist_image: np.ndarray) -> float:
        return float(self.predict_pair(ref_image, dist_image).data[0])

    def batch_loss(self, samples: list[tuple[np.ndarray, np.ndarray, float]]) -> Tensor:
        refs = np.stack([r for r, _, _ in samples])
        dists = np.stack([d for _, d, _ in samples])
        labels = np.array([m for _, _, m in samples], dtype=np.float64)
        return l1_loss(self.predict_pairs(refs, dists), labels)

    # -- serialization -----------------------------------------------------

    def save(self, path) -> None:
        arrays = {name: t.data for name, t in self.parameters().items()}
        meta = {
            "format": "headqa-model-v1",
            "seed": self.seed,
            "encoder_config": self.encoder_config.to_json(),
            "fusion_config": self.fusion_config.to_json(),
        }
        np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)

    @staticmethod
    def load(path) -> "QualityModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != "headqa-model-v1":
                raise ValueError(f"not a headqa model file: {path}")
            model = QualityModel(
                EncoderConfig.from_json(meta["encoder_config"]),
                FusionConfig.from_json(meta["fusion_config"]),
                seed=meta["seed"],
            )
            params = model.parameters()
            for name in params:
                params[name].data = np.array(data[name], dtype=np.float64)
        return model

    def state_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()
