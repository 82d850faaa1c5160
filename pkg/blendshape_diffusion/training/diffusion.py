"""
Denoiser training on frozen-VAE latents. The upper-face (and single-latent) denoiser adds the
frozen emotion adapter's loss on decoded ẑ_0; the mouth denoiser trains on the latent loss alone.
"""
import copy
import logging
from dataclasses import dataclass, field
import numpy as np
import torch
from blendshape_diffusion.models.adapter import adapter_loss, mouth_objective, upper_objective
from blendshape_diffusion.models.checkpoint import load_model, save_region_bundle
from blendshape_diffusion.models.diffusion import (
    Denoiser,
    denoise,
    embed_audio_batch,
    noise_prediction_loss,
    predict_z0,
    q_sample,
)
from blendshape_diffusion.models.vae import encode
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.shared.exceptions import ConfigurationError, NumericalAbortError
from blendshape_diffusion.training.common import (
    DIFFUSION_STREAM,
    REGION_CODES,
    Stopwatch,
    batch_schedule,
    build_optimizer,
    check_finite,
    initialise_model,
    load_manifest,
    log_path_for,
    prepare_run,
    region_frames,
    step_budget,
)
from blendshape_diffusion.util.logging import TrainingLog
from blendshape_diffusion.util.seeding import torch_generator
from blendshape_diffusion.util.tensors import freeze, is_frozen, pad_sequences, parameter_digest

logger = logging.getLogger(__name__)


@dataclass
class DiffusionStepResult:
    """Objective and its components for one denoiser update; l_adapter is None without the adapter path"""

    objective: float
    l_lat: float
    l_adapter: float = None


@dataclass
class DiffusionTrainingResult:
    """Outcome of a denoiser run, with the frozen-model digests taken before and after"""

    model: Denoiser
    history: list = field(default_factory=list)
    adapter_history: list = field(default_factory=list)
    digests_before: dict = field(default_factory=dict)
    digests_after: dict = field(default_factory=dict)
    checkpoint: str = None


@dataclass
class AdapterGuidance:
    """Everything the adapter path needs besides the batch"""

    vae: torch.nn.Module
    adapter: torch.nn.Module
    weights: object
    columns: tuple = None


def encode_latents(vae, arrays, generator=None, sampled=False, batch_size=32):
    """
    z0 for every sequence from the frozen encoder: the posterior mean, or a posterior draw
    when `sampled` is set.

    :return: N×n×d tensor
    """
    dtype = vae.input_projection.weight.dtype
    latents = []
    vae.eval()
    with torch.no_grad():
        for start in range(0, len(arrays), batch_size):
            batch, mask = pad_sequences(arrays[start : start + batch_size], dtype)
            posterior = encode(vae, batch, mask if mask.any() else None)
            if sampled:
                noise = torch.randn(posterior.mu.shape, generator=generator, dtype=dtype)
                latents.append(posterior.mu + torch.exp(0.5 * posterior.logvar) * noise)
            else:
                latents.append(posterior.mu)
    return torch.cat(latents, dim=0)


def diffusion_training_step(model, z0, cond, sched, generator, optimizer=None, labels=None, length=None, guidance=None, step=0):
    """
    One denoiser update: t ~ U{1..T}, ε ~ N(0, I), ε-prediction loss, plus the adapter loss
    on decoded ẑ_0 when guidance is given.

    :param z0: B×n×d clean latents
    :param cond: B×256 audio embeddings
    :param labels: B emotion indices, required with guidance
    :param length: frames to decode for the adapter loss
    """
    model.train()
    for parameter in model.parameters():
        parameter.grad = None
    dtype = z0.dtype
    t = torch.randint(1, sched.T + 1, (z0.shape[0],), generator=generator)
    eps = torch.randn(z0.shape, generator=generator, dtype=dtype)
    z_t = q_sample(z0, t, eps, sched)
    eps_hat = denoise(model, z_t, t, cond)
    l_lat = noise_prediction_loss(eps, eps_hat)
    if guidance is None:
        objective = mouth_objective(l_lat)
        l_adapter = None
    else:
        z0_hat = predict_z0(z_t, t, eps_hat, sched)
        l_adapter = adapter_loss(z0_hat, labels, guidance.vae, guidance.adapter, length, guidance.columns)
        objective = upper_objective(l_lat, l_adapter, guidance.weights)
    check_finite(objective, step, "Diffusion", l_lat=float(l_lat))
    objective.backward()
    if optimizer is not None:
        optimizer.step()
    return DiffusionStepResult(
        objective=float(objective), l_lat=float(l_lat), l_adapter=None if l_adapter is None else float(l_adapter)
    )


def frozen_digests(vae, adapter=None):
    """sha256 state digests of the frozen models"""
    digests = {"vae": parameter_digest(vae)}
    if adapter is not None:
        digests["adapter"] = parameter_digest(adapter)
    return digests


def fit_denoiser(model, z0, cond, sched, optimizer_section, total_steps, seed, labels=None, length=None, guidance=None, log_every=20, training_log=None):
    """
    Train a denoiser on precomputed latents and conditions.

    :param z0: N×n×d latents from the frozen encoder
    :param cond: N×256 audio embeddings
    :raises NumericalAbortError: after restoring the last logged parameters
    """
    batch_size = optimizer_section["batch_size"]
    optimizer = build_optimizer(model, optimizer_section)
    generator = torch_generator(seed, DIFFUSION_STREAM, 1)
    labels = None if labels is None else torch.as_tensor(np.asarray(labels, dtype=np.int64))
    history, adapter_history = [], []
    last_good = copy.deepcopy(model.state_dict())
    clock = Stopwatch()
    for step, indices in batch_schedule(z0.shape[0], batch_size, total_steps, seed, DIFFUSION_STREAM):
        index = torch.as_tensor(indices, dtype=torch.long)
        try:
            result = diffusion_training_step(
                model,
                z0[index],
                cond[index],
                sched,
                generator,
                optimizer,
                labels=None if labels is None else labels[index],
                length=length,
                guidance=guidance,
                step=step,
            )
        except NumericalAbortError:
            model.load_state_dict(last_good)
            raise
        history.append(result.l_lat)
        if result.l_adapter is not None:
            adapter_history.append(result.l_adapter)
        logger.debug("step %d l_lat %.6f l_adapter %s", step, result.l_lat, result.l_adapter)
        if step % log_every == 0 or step == total_steps:
            last_good = copy.deepcopy(model.state_dict())
            values = {"objective": result.objective, "l_lat": result.l_lat}
            if guidance is not None:
                values["l_adapter"] = result.l_adapter
            if training_log is not None:
                training_log.append(step, clock.elapsed_ms(), values)
            logger.info("Denoiser step %d: %s", step, " ".join(f"{k} {v:.6f}" for k, v in values.items()))
    return history, adapter_history


def train_diffusion(run_config, region, manifest, vae_path, out_path, adapter_path=None, partition=None):
    """
    Train one region denoiser against a frozen VAE and write a sampling-ready checkpoint.

    :param region: upper, mouth, or full
    :param vae_path: the region VAE checkpoint
    :param adapter_path: emotion adapter checkpoint; required for upper/full when λ_adapter > 0,
        never read for the mouth
    :raises ConfigurationError: on a missing adapter, a region mismatch, or a broken freeze contract
    """
    prepare_run(run_config)
    partition = partition or FacePartition.default()
    weights = run_config.loss_weights()
    use_adapter = region != "mouth" and weights.lambda_adapter > 0
    if use_adapter and not adapter_path:
        raise ConfigurationError(
            f"The {region} denoiser needs an emotion adapter checkpoint when lambda_adapter > 0"
        )
    if region == "mouth" and adapter_path:
        logger.warning("The mouth denoiser trains on the latent loss alone; ignoring %s", adapter_path)
    vae, _ = load_model(vae_path, "vae")
    if vae.config.region != region:
        raise ConfigurationError(f"{vae_path} holds a {vae.config.region} VAE, not {region}")
    vae = freeze(vae.to(torch.get_default_dtype()))
    adapter = None
    guidance = None
    if use_adapter:
        adapter, _ = load_model(adapter_path, "adapter")
        adapter = freeze(adapter.to(torch.get_default_dtype()))
        columns = None if region == "upper" else partition.upper_idx
        guidance = AdapterGuidance(vae=vae, adapter=adapter, weights=weights, columns=columns)
        logger.info(
            "Emotion adapter loss enabled: lambda_lat %s lambda_adapter %s", weights.lambda_lat, weights.lambda_adapter
        )
    digests_before = frozen_digests(vae, adapter)
    logger.info("Frozen model digests before training: %s", digests_before)

    manifest = load_manifest(manifest)
    pairs = manifest.load_split("train")
    arrays = region_frames([seq for seq, _ in pairs], region, partition)
    sampled = run_config["training"]["sampled_z0"]
    z0 = encode_latents(vae, arrays, torch_generator(run_config.seed, DIFFUSION_STREAM, 2), sampled=sampled)
    cond = embed_audio_batch([track for _, track in pairs], dtype=z0.dtype)
    labels = [int(seq.emotion) for seq, _ in pairs]
    length = max(array.shape[0] for array in arrays)

    config = run_config.denoiser_config()
    model = initialise_model(lambda: Denoiser(config), run_config.seed, DIFFUSION_STREAM, REGION_CODES[region])
    sched = run_config.schedule()
    budget = run_config["budget"]
    total_steps = step_budget(
        budget["diffusion_steps"], budget["diffusion_epochs"], len(arrays), run_config["optimizer"]["batch_size"]
    )
    fields = ["objective", "l_lat"] + (["l_adapter"] if use_adapter else [])
    training_log = TrainingLog(log_path_for(out_path), fields)
    extra = {"inference.steps": run_config["inference"]["steps"], "inference.sampler": run_config["inference"]["sampler"]}
    logger.info("Training %s denoiser for %d steps on %d latents", region, total_steps, len(arrays))
    try:
        history, adapter_history = fit_denoiser(
            model,
            z0,
            cond,
            sched,
            run_config["optimizer"],
            total_steps,
            run_config.seed,
            labels=labels if use_adapter else None,
            length=length,
            guidance=guidance,
            log_every=run_config["training"]["log_every"],
            training_log=training_log,
        )
    except NumericalAbortError as n_e:
        save_region_bundle(out_path, model, vae, run_config.schedule_blob(), extra)
        n_e.diagnostics["checkpoint"] = out_path
        raise
    digests_after = frozen_digests(vae, adapter)
    logger.info("Frozen model digests after training: %s", digests_after)
    if digests_after != digests_before or not is_frozen(vae):
        raise ConfigurationError("Frozen VAE or adapter parameters changed during denoiser training")
    save_region_bundle(out_path, model, vae, run_config.schedule_blob(), extra)
    return DiffusionTrainingResult(
        model=model,
        history=history,
        adapter_history=adapter_history,
        digests_before=digests_before,
        digests_after=digests_after,
        checkpoint=out_path,
    )
