"""
Encoder-only emotion adapter that scores upper-face sequences against the emotion categories,
and the training objectives of the upper-face and mouth denoisers.
"""
import logging
from dataclasses import dataclass, asdict
import torch
from torch import nn
from torch.nn import functional as F
from blendshape_diffusion.models.layers import LongSkipTransformer, SinusoidalPositions
from blendshape_diffusion.models.vae import Latent, decode
from blendshape_diffusion.shared.constants import EMOTION_NAMES
from blendshape_diffusion.shared.exceptions import ConfigurationError, ShapeError
from blendshape_diffusion.util.tensors import is_frozen, pad_sequences

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdapterConfig:
    """Architecture of the emotion adapter"""

    coefficients: int = 19
    layers: int = 4
    heads: int = 4
    width: int = 256
    num_categories: int = len(EMOTION_NAMES)
    max_len: int = 256
    skip_connections: bool = True

    def __post_init__(self):
        if self.width % self.heads:
            raise ConfigurationError(f"Adapter width {self.width} is not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ConfigurationError("Adapter needs at least one layer")

    def to_dict(self):
        """Plain dict of the fields, used by the checkpoint config blob"""
        return asdict(self)


@dataclass(frozen=True)
class LossWeights:
    """λ_lat and λ_adapter of the upper-face objective"""

    lambda_lat: float = 1.0
    lambda_adapter: float = 10.0

    def __post_init__(self):
        if self.lambda_lat < 0 or self.lambda_adapter < 0:
            raise ConfigurationError("Loss weights must be non-negative")

    @classmethod
    def from_ratio(cls, ratio, lambda_lat=1.0):
        """Weights with λ_lat : λ_adapter = ratio"""
        if ratio <= 0:
            raise ConfigurationError(f"Loss weight ratio must be positive, got {ratio}")
        return cls(lambda_lat=lambda_lat, lambda_adapter=lambda_lat / ratio)


class EmotionAdapter(nn.Module):
    """[category token, embedded frames] through a transformer; logits read at the category token"""

    def __init__(self, config: AdapterConfig):
        super().__init__()
        self.config = config
        self.frame_projection = nn.Linear(config.coefficients, config.width)
        self.category_token = nn.Parameter(torch.randn(1, config.width) * 0.02)
        self.positions = SinusoidalPositions(config.width, config.max_len)
        self.encoder = LongSkipTransformer(
            config.width, config.heads, config.layers, skip_connections=config.skip_connections
        )
        self.category_head = nn.Linear(config.width, config.num_categories)


def adapter_forward(model, upper_seq, padding_mask=None):
    """
    Emotion logits of upper-face sequences.

    :param upper_seq: L×R or B×L×R tensor
    :param padding_mask: optional B×L bool mask, True on padded frames
    :return: B×9 logits (9 logits for a single sequence)
    """
    x = torch.as_tensor(upper_seq)
    single = x.dim() == 2
    x = (x.unsqueeze(0) if single else x).to(model.frame_projection.weight.dtype)
    if x.dim() != 3 or x.shape[2] != model.config.coefficients:
        raise ShapeError(f"Adapter expects {model.config.coefficients} coefficients, got {tuple(x.shape)}")
    if x.shape[1] > model.config.max_len:
        raise ShapeError(f"Sequence length {x.shape[1]} exceeds adapter max_len {model.config.max_len}")
    batch, length, _ = x.shape
    frames = model.frame_projection(x) + model.positions(length)
    stream = torch.cat([model.category_token.unsqueeze(0).expand(batch, -1, -1), frames], dim=1)
    mask = None
    if padding_mask is not None:
        mask = torch.cat([torch.zeros(batch, 1, dtype=torch.bool), padding_mask], dim=1)
    logits = model.category_head(model.encoder(stream, key_padding_mask=mask)[:, 0])
    return logits.squeeze(0) if single else logits


def emotion_cross_entropy(logits, target):
    """-log softmax(logits)[target], averaged over the batch"""
    logits = logits.unsqueeze(0) if logits.dim() == 1 else logits
    target = torch.as_tensor(target, dtype=torch.long).reshape(-1)
    return F.cross_entropy(logits, target)


def adapter_loss(z0_hat, target, vae, adapter, length, columns=None):
    """
    Decode predicted clean latents and score the upper face against the target emotions.
    Gradients flow through the frozen decoder and adapter to whatever produced z0_hat.

    :param z0_hat: Latent or B×n×d tensor predicted from (z_t, t)
    :param target: B emotion indices
    :param length: frames to decode
    :param columns: upper-face column indices of the decoded region; None when the region is the upper face
    :raises ConfigurationError: when the adapter or decoder still has trainable parameters
    """
    if not is_frozen(adapter):
        raise ConfigurationError("The emotion adapter must be pretrained and frozen before use as a loss")
    if not is_frozen(vae):
        raise ConfigurationError("The VAE must be frozen before use in the adapter loss")
    latent = z0_hat if isinstance(z0_hat, Latent) else Latent(z=z0_hat, region=vae.config.region)
    decoded = decode(vae, latent, length)
    if columns is not None:
        decoded = decoded[:, :, list(columns)]
    return emotion_cross_entropy(adapter_forward(adapter, decoded), target)


def upper_objective(l_lat, l_adapter, weights):
    """λ_lat * l_lat + λ_adapter * l_adapter"""
    return weights.lambda_lat * l_lat + weights.lambda_adapter * l_adapter


def mouth_objective(l_lat):
    """The mouth denoiser trains on the latent diffusion loss alone"""
    return l_lat


def emotion_accuracy(model, sequences, labels, batch_size=64):
    """Top-1 accuracy of the adapter on a list of upper-face arrays"""
    if not sequences:
        return 0.0
    correct = 0
    with torch.no_grad():
        for start in range(0, len(sequences), batch_size):
            batch, mask = pad_sequences(sequences[start : start + batch_size], model.frame_projection.weight.dtype)
            predicted = adapter_forward(model, batch, mask).argmax(dim=-1)
            correct += int((predicted == torch.as_tensor(labels[start : start + batch_size])).sum())
    return correct / len(sequences)
