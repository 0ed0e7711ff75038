"""Seeded training loop: Adam over L1 loss with random-crop augmentation.

Both the encoder and the fusion head train by default; --freeze-encoder
reproduces the frozen-backbone regime (head-only updates). All randomness
(sample order, crop offsets) flows from one generator, so a fixed seed
reproduces the loss curve bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh_io import TextureImage
from ..render import resize_bilinear
from .fusion import QualityModel


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    resize_width: int = 256
    resize_height: int = 456
    crop: int = 224
    seed: int = 0
    freeze_encoder: bool = False

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batch_size", "beta1", "beta2",
                     "eps", "resize_width", "resize_height", "crop"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrainResult:
    model: QualityModel
    loss_curve: list[float]


class Adam:
    def __init__(self, params: dict, config: TrainConfig):
        self.params = params
        self.config = config
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * p.grad
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * p.grad**2
            p.data = p.data - c.learning_rate * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + c.eps)


def prepare_image(image: TextureImage, config: TrainConfig) -> np.ndarray:
    """Resize to the configured target; crops happen per epoch."""
    if (image.width, image.height) != (config.resize_width, config.resize_height):
        image = resize_bilinear(image, config.resize_width, config.resize_height)
    return image.pixels.astype(np.float64) / 255.0


def random_crop_pair(ref: np.ndarray, dist: np.ndarray, crop: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One offset for both images: the pair must stay aligned."""
    h, w = ref.shape[0], ref.shape[1]
    if h < crop or w < crop:
        raise TrainingError(f"images {w}x{h} smaller than crop {crop}")
    y = int(rng.integers(0, h - crop + 1))
    x = int(rng.integers(0, w - crop + 1))
    return ref[y:y + crop, x:x + crop], dist[y:y + crop, x:x + crop]


def center_crop(img: np.ndarray, crop: int) -> np.ndarray:
    h, w = img.shape[0], img.shape[1]
    y = (h - crop) // 2
    x = (w - crop) // 2
    return img[y:y + crop, x:x + crop]


def train(model: QualityModel, dataset: list[tuple[TextureImage, TextureImage, float]],
          config: TrainConfig, progress=None) -> TrainResult:
    """dataset: (reference projection, distorted projection, MOS) triplets.

    Returns the trained model and the per-epoch mean training loss.
    """
    if not dataset:
        raise TrainingError("empty dataset")
    if config.crop != model.encoder_config.image_side:
        raise TrainingError(
            f"crop {config.crop} does not match encoder input side "
            f"{model.encoder_config.image_side}"
        )

    prepared = [(prepare_image(r, config), prepare_image(d, config), float(m))
                for r, d, m in dataset]

    params = model.parameters()
    if config.freeze_encoder:
        params = {k: p for k, p in params.items() if not k.startswith("encoder.")}
    optimizer = Adam(params, config)
    rng = np.random.default_rng(config.seed)

    curve: list[float] = []
    n = len(prepared)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            samples = []
            for i in batch_idx:
                ref, dist, mos_value = prepared[i]
                ref_c, dist_c = random_crop_pair(ref, dist, config.crop, rng)
                samples.append((ref_c, dist_c, mos_value))
            model.zero_grad()
            loss = model.batch_loss(samples)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}; "
                    "check input normalization and learning rate"
                )
            loss.backward()
            optimizer.step()
            epoch_losses.append(value * len(samples))
        curve.append(sum(epoch_losses) / n)
        if progress is not None:
            progress(epoch, curve[-1])
    return TrainResult(model=model, loss_curve=curve)
