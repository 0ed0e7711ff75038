"""Learned full-reference quality model: hierarchical encoder, attention
fusion, FC regression, L1 training, gradient checking."""

from .autodiff import KinkTracker, Tensor
from .encoder import EncoderConfig, HierarchicalEncoder, QualityEmbedding
from .fusion import FusionConfig, FusionHead, QualityModel, l1_loss
from .gradcheck import GradCheckResult, gradient_check
from .train import Adam, TrainConfig, TrainResult, TrainingError, train

__all__ = [
    "Adam", "EncoderConfig", "FusionConfig", "FusionHead", "GradCheckResult",
    "HierarchicalEncoder", "KinkTracker", "QualityEmbedding", "QualityModel",
    "Tensor", "TrainConfig", "TrainResult", "TrainingError",
    "gradient_check", "l1_loss", "train",
]
