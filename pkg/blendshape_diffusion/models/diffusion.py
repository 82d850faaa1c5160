"""
Conditional latent diffusion: linear β schedule, closed-form forward noising, a transformer
ε-prediction denoiser conditioned on a pooled audio embedding, and strided ancestral sampling.

Diffusion steps are 1-indexed: t = 1..T, with ᾱ_0 = 1.
"""
import logging
from dataclasses import dataclass, asdict
import numpy as np
import torch
from torch import nn
from blendshape_diffusion.models.layers import LongSkipTransformer, SinusoidalPositions, timestep_embedding
from blendshape_diffusion.models.vae import Latent, decode
from blendshape_diffusion.shared.constants import (
    AUDIO_EMBEDDING_WIDTH,
    AUDIO_FEATURE_CHANNELS,
    AUDIO_PROJECTION_SEED,
    MIN_SEQUENCE_FRAMES,
)
from blendshape_diffusion.shared.exceptions import (
    ConfigurationError,
    LengthError,
    NumericalAbortError,
    ShapeError,
    ValidationError,
)

logger = logging.getLogger(__name__)

CONDITIONING_MODES = ("concat", "cross_attention")
SAMPLERS = ("ddpm", "ddim")


@dataclass(frozen=True)
class NoiseSchedule:
    """β_t, α_t = 1 - β_t and ᾱ_t = Π α_s for t = 1..T, stored 0-indexed in float64"""

    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    @property
    def T(self):  # pylint: disable=invalid-name
        """Number of diffusion steps"""
        return self.betas.shape[0]

    def alpha_bar(self, t):
        """ᾱ_t, with ᾱ_0 = 1"""
        return self.alpha_bars[t - 1] if t > 0 else torch.ones((), dtype=torch.float64)


def schedule_from_betas(betas):
    """Build a schedule from explicit betas. β = 0 is allowed here for degenerate test schedules."""
    betas = torch.as_tensor(betas, dtype=torch.float64).flatten()
    if betas.numel() < 1 or not bool(((betas >= 0) & (betas < 1)).all()):
        raise ConfigurationError("Schedule betas must lie in [0, 1)")
    alphas = 1.0 - betas
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=torch.cumprod(alphas, dim=0))


def make_schedule(T=1000, beta_start=8.5e-4, beta_end=0.012):  # pylint: disable=invalid-name
    """
    Linear schedule β_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start).

    :raises ConfigurationError: unless 0 < beta_start <= beta_end < 1 and T >= 2
    """
    if T < 2:
        raise ConfigurationError(f"A schedule needs at least 2 steps, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ConfigurationError(
            f"Schedule needs 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )
    return schedule_from_betas(torch.linspace(beta_start, beta_end, T, dtype=torch.float64))


def _check_step(t, sched):
    steps = torch.as_tensor(t)
    if bool((steps < 1).any()) or bool((steps > sched.T).any()):
        raise ValidationError(f"Diffusion step must lie in [1, {sched.T}], got {t}")


def _coefficient(values, t, like):
    """values[t-1] broadcast against like; t is an int or a B-vector of steps"""
    if isinstance(t, int):
        return values[t - 1].to(like.dtype)
    picked = values[torch.as_tensor(t, dtype=torch.long) - 1].to(like.dtype)
    return picked.view(-1, *([1] * (like.dim() - 1)))


def q_sample(z0, t, eps, sched):
    """z_t = sqrt(ᾱ_t) z0 + sqrt(1 - ᾱ_t) eps"""
    _check_step(t, sched)
    if z0.shape != eps.shape:
        raise ShapeError(f"z0 {tuple(z0.shape)} and eps {tuple(eps.shape)} shapes differ")
    return (
        _coefficient(torch.sqrt(sched.alpha_bars), t, z0) * z0
        + _coefficient(torch.sqrt(1.0 - sched.alpha_bars), t, z0) * eps
    )


def q_step(z_prev, t, noise, sched):
    """One forward step: z_t = sqrt(α_t) z_{t-1} + sqrt(β_t) noise"""
    _check_step(t, sched)
    return _coefficient(torch.sqrt(sched.alphas), t, z_prev) * z_prev + _coefficient(
        torch.sqrt(sched.betas), t, z_prev
    ) * noise


def predict_z0(z_t, t, eps_hat, sched):
    """Invert the forward process for a predicted noise: (z_t - sqrt(1 - ᾱ_t) ε̂) / sqrt(ᾱ_t)"""
    return (z_t - _coefficient(torch.sqrt(1.0 - sched.alpha_bars), t, z_t) * eps_hat) / _coefficient(
        torch.sqrt(sched.alpha_bars), t, z_t
    )


def _audio_projection():
    rng = np.random.default_rng(AUDIO_PROJECTION_SEED)
    return rng.standard_normal((4 * AUDIO_FEATURE_CHANNELS, AUDIO_EMBEDDING_WIDTH)) / np.sqrt(
        4 * AUDIO_FEATURE_CHANNELS
    )


AUDIO_PROJECTION = _audio_projection()


def embed_audio(track):
    """
    Frozen pooled audio embedding: per-channel mean, population std, min and max over time,
    projected by a fixed random matrix and squashed with tanh. No trainable parameters.

    :param track: AudioFeatureTrack or L×F array
    :return: float64 numpy vector of length 256
    """
    features = np.asarray(getattr(track, "features", track), dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != AUDIO_FEATURE_CHANNELS:
        raise ShapeError(f"Expected L×{AUDIO_FEATURE_CHANNELS} audio features, got {features.shape}")
    if features.shape[0] < MIN_SEQUENCE_FRAMES:
        raise LengthError(f"Audio tracks need at least {MIN_SEQUENCE_FRAMES} frames, got {features.shape[0]}")
    stats = np.concatenate(
        [features.mean(axis=0), features.std(axis=0), features.min(axis=0), features.max(axis=0)]
    )
    return np.tanh(stats @ AUDIO_PROJECTION)


def embed_audio_batch(tracks, dtype=None):
    """B×256 tensor of audio embeddings"""
    stacked = np.stack([embed_audio(track) for track in tracks])
    return torch.as_tensor(stacked, dtype=dtype or torch.get_default_dtype())


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture of one region denoiser"""

    layers: int = 9
    heads: int = 4
    width: int = 256
    latent_tokens: int = 1
    conditioning: str = "concat"
    condition_width: int = AUDIO_EMBEDDING_WIDTH
    skip_connections: bool = True

    def __post_init__(self):
        if self.conditioning not in CONDITIONING_MODES:
            raise ConfigurationError(
                f"Conditioning must be one of {CONDITIONING_MODES}, got {self.conditioning!r}"
            )
        if self.width % self.heads:
            raise ConfigurationError(f"Denoiser width {self.width} is not divisible by {self.heads} heads")
        if self.layers < 1 or self.latent_tokens < 1:
            raise ConfigurationError("Denoiser layers and latent_tokens must be at least 1")

    def to_dict(self):
        """Plain dict of the fields, used by the checkpoint config blob"""
        return asdict(self)


class Denoiser(nn.Module):
    """
    ε_θ(z_t, t, c). Concat mode processes [time token, condition token, latent tokens];
    cross_attention mode processes [time token, latent tokens] and attends to the condition.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        width = config.width
        self.time_mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width))
        self.condition_projection = nn.Linear(config.condition_width, width)
        self.latent_projection = nn.Linear(width, width)
        self.positions = SinusoidalPositions(width, config.latent_tokens)
        self.backbone = LongSkipTransformer(
            width,
            config.heads,
            config.layers,
            cross_attention=config.conditioning == "cross_attention",
            skip_connections=config.skip_connections,
        )
        self.output_projection = nn.Linear(width, width)

    def forward(self, z_t, t, cond):
        dtype = self.latent_projection.weight.dtype
        time_token = self.time_mlp(timestep_embedding(t, self.config.width).to(dtype)).unsqueeze(1)
        cond_token = self.condition_projection(cond.to(dtype)).unsqueeze(1)
        latents = self.latent_projection(z_t) + self.positions(self.config.latent_tokens)
        if self.config.conditioning == "concat":
            out = self.backbone(torch.cat([time_token, cond_token, latents], dim=1))
            return self.output_projection(out[:, 2:])
        out = self.backbone(torch.cat([time_token, latents], dim=1), memory=cond_token)
        return self.output_projection(out[:, 1:])


def denoise(model, z_t, t, cond):
    """
    Predicted noise for a batch of noisy latents.

    :param z_t: B×n×d (or n×d) noisy latents
    :param t: int or B-vector of steps
    :param cond: B×256 (or 256) audio embeddings
    :return: ε̂ with the shape of z_t
    """
    single = z_t.dim() == 2
    z = z_t.unsqueeze(0) if single else z_t
    cond = torch.as_tensor(cond)
    cond = cond.unsqueeze(0) if cond.dim() == 1 else cond
    expected = (model.config.latent_tokens, model.config.width)
    if tuple(z.shape[1:]) != expected:
        raise ShapeError(f"Latent shape {tuple(z.shape[1:])} does not match {expected}")
    if cond.shape != (z.shape[0], model.config.condition_width):
        raise ShapeError(f"Condition shape {tuple(cond.shape)} does not match the latent batch")
    steps = torch.full((z.shape[0],), t, dtype=torch.long) if isinstance(t, int) else torch.as_tensor(t)
    eps_hat = model(z, steps, cond)
    return eps_hat.squeeze(0) if single else eps_hat


def noise_prediction_loss(eps, eps_hat):
    """‖eps - eps_hat‖² summed over latent entries, averaged over the batch"""
    squared = (eps - eps_hat).pow(2)
    return squared.sum() if squared.dim() == 2 else squared.flatten(start_dim=1).sum(dim=1).mean()


def diffusion_loss(model, z0, t, eps, cond, sched):
    """
    ‖eps - ε_θ(q_sample(z0, t, eps), t, cond)‖² summed over latent entries, averaged over the batch.
    """
    eps_hat = denoise(model, q_sample(z0, t, eps, sched), t, cond)
    loss = noise_prediction_loss(eps, eps_hat)
    if not torch.isfinite(loss):
        raise NumericalAbortError(
            "Diffusion loss is not finite",
            {"t": t if isinstance(t, int) else torch.as_tensor(t).tolist(), "loss": float(loss)},
        )
    return loss


def posterior_variance(t, sched):
    """β̃_t = β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t); zero when 1 - ᾱ_t is zero"""
    one_minus = 1.0 - sched.alpha_bar(t)
    if float(one_minus) == 0.0:
        return torch.zeros((), dtype=torch.float64)
    return sched.betas[t - 1] * (1.0 - sched.alpha_bar(t - 1)) / one_minus


def ancestral_update(z_t, t, eps_hat, sched, noise=None):
    """
    DDPM reverse step: μ = (z_t - β_t / sqrt(1 - ᾱ_t) ε̂) / sqrt(α_t), plus sqrt(β̃_t) noise for t > 1.
    """
    one_minus = 1.0 - sched.alpha_bar(t)
    scale = sched.betas[t - 1] / torch.sqrt(one_minus) if float(one_minus) > 0 else torch.zeros((), dtype=torch.float64)
    mean = (z_t - scale.to(z_t.dtype) * eps_hat) / torch.sqrt(sched.alphas[t - 1]).to(z_t.dtype)
    if t == 1 or noise is None:
        return mean
    return mean + torch.sqrt(posterior_variance(t, sched)).to(z_t.dtype) * noise


def ddim_update(z_t, t, eps_hat, sched):
    """Deterministic DDIM (η = 0) step from t to t - 1 on the given schedule"""
    z0_hat = predict_z0(z_t, t, eps_hat, sched)
    previous = sched.alpha_bar(t - 1)
    return torch.sqrt(previous).to(z_t.dtype) * z0_hat + torch.sqrt(1.0 - previous).to(z_t.dtype) * eps_hat


def p_sample_step(model, z_t, t, cond, sched, generator, model_step=None, sampler="ddpm"):
    """
    One reverse step z_t → z_{t-1}. Noise is drawn from generator only when t > 1.

    :param t: position on sched (1..sched.T)
    :param model_step: step passed to the denoiser when sched is a respaced schedule
    """
    _check_step(t, sched)
    eps_hat = denoise(model, z_t, model_step if model_step is not None else t, cond)
    if sampler == "ddim":
        return ddim_update(z_t, t, eps_hat, sched)
    noise = None
    if t > 1:
        noise = torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype)
    return ancestral_update(z_t, t, eps_hat, sched, noise)


def strided_timesteps(T, steps):  # pylint: disable=invalid-name
    """Uniformly strided steps from T down to 1, `steps` of them"""
    if steps > T:
        raise ConfigurationError(f"Cannot sample with {steps} steps from a {T}-step schedule")
    if steps < 1:
        raise ConfigurationError(f"Sampling needs at least one step, got {steps}")
    return [int(step) for step in np.round(np.linspace(1, T, steps)).astype(int)[::-1]]


def respace_schedule(sched, timesteps):
    """
    Schedule over a subsequence of steps: β'_k = 1 - ᾱ_{τ_k} / ᾱ_{τ_{k-1}} with ascending τ.
    """
    ascending = sorted(timesteps)
    kept = sched.alpha_bars[torch.as_tensor(ascending) - 1]
    previous = torch.cat([torch.ones(1, dtype=torch.float64), kept[:-1]])
    return schedule_from_betas(1.0 - kept / previous)


def sample_latent(model, cond, sched, steps, generator, sampler="ddpm"):
    """
    Run the reverse chain from pure noise on `steps` uniformly strided steps.

    With steps == T the original schedule is used unchanged, so the result matches the plain
    full chain bit for bit.

    :param cond: B×256 audio embeddings
    :return: B×n×d latents ẑ_0
    """
    if sampler not in SAMPLERS:
        raise ConfigurationError(f"Sampler must be one of {SAMPLERS}, got {sampler!r}")
    timesteps = strided_timesteps(sched.T, steps)
    chain = sched if steps == sched.T else respace_schedule(sched, timesteps)
    cond = torch.as_tensor(cond)
    cond = cond.unsqueeze(0) if cond.dim() == 1 else cond
    dtype = model.latent_projection.weight.dtype
    shape = (cond.shape[0], model.config.latent_tokens, model.config.width)
    z = torch.randn(shape, generator=generator, dtype=dtype)
    with torch.no_grad():
        for position, model_step in zip(range(steps, 0, -1), timesteps):
            z = p_sample_step(model, z, position, cond, chain, generator, model_step=model_step, sampler=sampler)
    return z


def sample(model, cond, sched, steps, length, vae, generator, sampler="ddpm"):
    """
    Sample latents for the conditions and decode them once with the region VAE decoder.

    :return: B×L×R tensor of region coefficients
    """
    z0 = sample_latent(model, cond, sched, steps, generator, sampler=sampler)
    with torch.no_grad():
        return decode(vae, Latent(z=z0, region=vae.config.region), length)
