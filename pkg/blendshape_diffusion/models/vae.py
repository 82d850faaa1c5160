"""
Per-region transformer VAE over blendshape sequences.

The encoder prepends learnable distribution tokens (n μ-tokens, n logvar-tokens) to the
embedded frames and reads the posterior at those positions. The decoder turns L zero tokens
plus positions into frames by cross-attending to the latent.
"""
import logging
from dataclasses import dataclass, asdict
import torch
from torch import nn
from blendshape_diffusion.models.layers import LongSkipTransformer, SinusoidalPositions
from blendshape_diffusion.shared.exceptions import (
    ConfigurationError,
    LengthError,
    ShapeError,
    ValidationError,
)

logger = logging.getLogger(__name__)

REGIONS = ("upper", "mouth", "full")


@dataclass(frozen=True)
class VaeConfig:
    """Architecture and loss weighting of one region VAE"""

    region: str = "upper"
    coefficients: int = 19
    layers: int = 9
    heads: int = 4
    width: int = 256
    latent_tokens: int = 1
    max_len: int = 256
    kl_weight: float = 1e-4
    skip_connections: bool = True

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ConfigurationError(f"VAE region must be one of {REGIONS}, got {self.region!r}")
        if self.width % self.heads:
            raise ConfigurationError(f"VAE width {self.width} is not divisible by {self.heads} heads")
        if self.latent_tokens < 1 or self.layers < 1 or self.coefficients < 1:
            raise ConfigurationError("VAE latent_tokens, layers and coefficients must be at least 1")
        if self.kl_weight < 0:
            raise ConfigurationError(f"kl_weight must be non-negative, got {self.kl_weight}")

    def to_dict(self):
        """Plain dict of the fields, used by the checkpoint config blob"""
        return asdict(self)


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian with mu and logvar of shape B×n×d"""

    mu: torch.Tensor
    logvar: torch.Tensor


@dataclass
class Latent:
    """Latent z of shape B×n×d tagged with its face region"""

    z: torch.Tensor
    region: str = "upper"


class RegionVae(nn.Module):
    """Encoder and decoder for one face region"""

    def __init__(self, config: VaeConfig):
        super().__init__()
        self.config = config
        width, tokens = config.width, config.latent_tokens
        self.input_projection = nn.Linear(config.coefficients, width)
        self.mu_tokens = nn.Parameter(torch.randn(tokens, width) * 0.02)
        self.logvar_tokens = nn.Parameter(torch.randn(tokens, width) * 0.02)
        self.positions = SinusoidalPositions(width, config.max_len)
        self.encoder = LongSkipTransformer(
            width, config.heads, config.layers, skip_connections=config.skip_connections
        )
        self.mu_head = nn.Linear(width, width)
        self.logvar_head = nn.Linear(width, width)
        self.latent_projection = nn.Linear(width, width)
        self.decoder = LongSkipTransformer(
            width,
            config.heads,
            config.layers,
            cross_attention=True,
            skip_connections=config.skip_connections,
        )
        self.output_projection = nn.Linear(width, config.coefficients)

    def check_length(self, length):
        """Raise LengthError outside [1, max_len]"""
        if length > self.config.max_len:
            raise LengthError(f"Sequence length {length} exceeds max_len {self.config.max_len}")
        if length < 1:
            raise LengthError(f"Sequence length must be positive, got {length}")


def _batched(tensor, ndim):
    return tensor.unsqueeze(0) if tensor.dim() == ndim - 1 else tensor


def encode(model, region_seq, padding_mask=None):
    """
    Posterior of a batch of region sequences.

    :param model: RegionVae
    :param region_seq: L×R or B×L×R tensor
    :param padding_mask: optional B×L bool mask, True on padded frames
    :rtype: GaussianPosterior with mu/logvar of shape B×n×d
    """
    x = _batched(torch.as_tensor(region_seq), 3).to(model.input_projection.weight.dtype)
    batch, length, columns = x.shape
    if columns != model.config.coefficients:
        raise ShapeError(f"Expected {model.config.coefficients} coefficients, got {columns}")
    model.check_length(length)
    if not torch.isfinite(x).all():
        raise ValidationError("Encoder input contains non-finite values")
    tokens = model.config.latent_tokens
    frames = model.input_projection(x) + model.positions(length)
    stream = torch.cat(
        [
            model.mu_tokens.unsqueeze(0).expand(batch, -1, -1),
            model.logvar_tokens.unsqueeze(0).expand(batch, -1, -1),
            frames,
        ],
        dim=1,
    )
    mask = None
    if padding_mask is not None:
        mask = torch.cat(
            [torch.zeros(batch, 2 * tokens, dtype=torch.bool), _batched(padding_mask, 2)], dim=1
        )
    out = model.encoder(stream, key_padding_mask=mask)
    return GaussianPosterior(
        mu=model.mu_head(out[:, :tokens]),
        logvar=model.logvar_head(out[:, tokens : 2 * tokens]),
    )


def reparameterize(posterior, noise, region="upper"):
    """z = mu + exp(0.5 * logvar) * noise"""
    if noise.shape != posterior.mu.shape or posterior.logvar.shape != posterior.mu.shape:
        raise ShapeError(
            f"Posterior {tuple(posterior.mu.shape)}/{tuple(posterior.logvar.shape)} and noise "
            f"{tuple(noise.shape)} shapes must match"
        )
    return Latent(z=posterior.mu + torch.exp(0.5 * posterior.logvar) * noise, region=region)


def decode(model, latent, length):
    """
    Frames for a latent. Output values are not clamped.

    :param latent: Latent (or raw tensor) of shape n×d or B×n×d
    :param length: number of frames L
    :return: B×L×R tensor
    """
    model.check_length(length)
    z = latent.z if isinstance(latent, Latent) else latent
    z = _batched(z, 3)
    if z.shape[1:] != (model.config.latent_tokens, model.config.width):
        raise ShapeError(
            f"Latent shape {tuple(z.shape[1:])} does not match "
            f"({model.config.latent_tokens}, {model.config.width})"
        )
    queries = model.positions(length).unsqueeze(0).expand(z.shape[0], -1, -1)
    out = model.decoder(queries, memory=model.latent_projection(z))
    return model.output_projection(out)


def kl_loss(posterior):
    """
    KL divergence to the standard normal, 0.5 * Σ (mu² + exp(logvar) - 1 - logvar) over the n×d
    entries, averaged over the batch.
    """
    per_entry = posterior.mu.pow(2) + torch.exp(posterior.logvar) - 1.0 - posterior.logvar
    if per_entry.dim() < 3:
        return 0.5 * per_entry.sum()
    return 0.5 * per_entry.flatten(start_dim=1).sum(dim=1).mean()


def recon_loss(pred, target, padding_mask=None):
    """Mean squared error over all real (unpadded) frame entries"""
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {tuple(pred.shape)} and target {tuple(target.shape)} shapes differ")
    squared = (pred - target).pow(2)
    if padding_mask is None:
        return squared.mean()
    keep = (~padding_mask).unsqueeze(-1).to(squared.dtype)
    return (squared * keep).sum() / (keep.sum() * squared.shape[-1])


def vae_loss(model, batch, noise, padding_mask=None):
    """
    Total VAE objective on a batch with a fixed reparameterization draw.

    :return: (total, mse, kl) scalar tensors with total = mse + kl_weight * kl
    """
    posterior = encode(model, batch, padding_mask)
    latent = reparameterize(posterior, noise, model.config.region)
    pred = decode(model, latent, batch.shape[1])
    mse = recon_loss(pred, batch, padding_mask)
    kl = kl_loss(posterior)
    if model.config.kl_weight == 0:
        return mse, mse, kl
    return mse + model.config.kl_weight * kl, mse, kl
