"""
Region VAE training: MSE + weighted KL with AdamW, periodic validation, and the
best-validation checkpoint.
"""
import copy
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
import torch
from blendshape_diffusion.models.checkpoint import save_model
from blendshape_diffusion.models.vae import RegionVae, decode, encode, vae_loss
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.shared.exceptions import NumericalAbortError
from blendshape_diffusion.training.common import (
    REGION_CODES,
    VAE_STREAM,
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
from blendshape_diffusion.util.tensors import pad_sequences

logger = logging.getLogger(__name__)


@dataclass
class VaeStepResult:
    """Loss components of one step and the gradients of every trainable parameter"""

    total: float
    mse: float
    kl: float
    grads: OrderedDict


@dataclass
class VaeTrainingResult:
    """Outcome of a VAE training run. The model holds the best-validation parameters."""

    model: RegionVae
    initial_val_mse: float
    best_val_mse: float
    best_step: int
    history: list = field(default_factory=list)
    checkpoint: str = None


def vae_training_step(model, batch, generator, optimizer=None, padding_mask=None, step=0):
    """
    One VAE update.

    :param batch: B×L×R region sequences
    :param generator: torch.Generator for the reparameterization noise
    :param optimizer: applied after the backward pass when given
    :return: VaeStepResult
    :raises NumericalAbortError: when the loss is not finite; parameters are left untouched
    """
    model.train()
    for parameter in model.parameters():
        parameter.grad = None
    shape = (batch.shape[0], model.config.latent_tokens, model.config.width)
    noise = torch.randn(shape, generator=generator, dtype=model.input_projection.weight.dtype)
    total, mse, kl = vae_loss(model, batch, noise, padding_mask)
    check_finite(total, step, "VAE", mse=float(mse), kl=float(kl))
    total.backward()
    grads = OrderedDict(
        (name, parameter.grad.detach().clone())
        for name, parameter in model.named_parameters()
        if parameter.grad is not None
    )
    if optimizer is not None:
        optimizer.step()
    return VaeStepResult(total=float(total), mse=float(mse), kl=float(kl), grads=grads)


def validation_mse(model, arrays, batch_size=32):
    """Reconstruction MSE over real frames, decoding the posterior mean"""
    if not arrays:
        return float("nan")
    dtype = model.input_projection.weight.dtype
    squared, count = 0.0, 0.0
    model.eval()
    with torch.no_grad():
        for start in range(0, len(arrays), batch_size):
            batch, mask = pad_sequences(arrays[start : start + batch_size], dtype)
            posterior = encode(model, batch, mask if mask.any() else None)
            pred = decode(model, posterior.mu, batch.shape[1])
            keep = (~mask).unsqueeze(-1).to(dtype)
            squared += float(((pred - batch).pow(2) * keep).sum())
            count += float(keep.sum()) * batch.shape[2]
    return squared / count


def fit_vae(model, train_arrays, val_arrays, optimizer_section, total_steps, seed, log_every=20, training_log=None):
    """
    Train a region VAE in memory.

    :param train_arrays: list of L×R region arrays
    :param val_arrays: list of L×R region arrays for model selection
    :param optimizer_section: the `optimizer` mapping of the run configuration
    :param total_steps: number of optimizer steps
    :raises NumericalAbortError: after restoring the best parameters seen so far
    """
    region_code = REGION_CODES[model.config.region]
    dtype = model.input_projection.weight.dtype
    batch_size = optimizer_section["batch_size"]
    optimizer = build_optimizer(model, optimizer_section)
    generator = torch_generator(seed, VAE_STREAM, region_code, 1)
    initial = validation_mse(model, val_arrays, batch_size)
    best, best_step, best_state = initial, 0, copy.deepcopy(model.state_dict())
    history = []
    clock = Stopwatch()
    logger.info("Training %s VAE for %d steps (initial validation MSE %.6f)", model.config.region, total_steps, initial)
    for step, indices in batch_schedule(len(train_arrays), batch_size, total_steps, seed, VAE_STREAM, region_code):
        batch, mask = pad_sequences([train_arrays[i] for i in indices], dtype)
        try:
            result = vae_training_step(model, batch, generator, optimizer, mask if mask.any() else None, step)
        except NumericalAbortError:
            model.load_state_dict(best_state)
            raise
        history.append(result.total)
        logger.debug("step %d total %.6f mse %.6f kl %.4f", step, result.total, result.mse, result.kl)
        if step % log_every == 0 or step == total_steps:
            val_mse = validation_mse(model, val_arrays, batch_size)
            if val_mse < best:
                best, best_step, best_state = val_mse, step, copy.deepcopy(model.state_dict())
            if training_log is not None:
                training_log.append(
                    step,
                    clock.elapsed_ms(),
                    {"total": result.total, "mse": result.mse, "kl": result.kl, "val_mse": val_mse},
                )
            logger.info(
                "%s VAE step %d: mse %.6f kl %.4f val_mse %.6f", model.config.region, step, result.mse, result.kl, val_mse
            )
    model.load_state_dict(best_state)
    return VaeTrainingResult(
        model=model, initial_val_mse=initial, best_val_mse=best, best_step=best_step, history=history
    )


def train_vae(run_config, region, manifest, out_path, partition=None):
    """
    Train one region VAE on the manifest's train split and write its best-validation checkpoint.
    On a numerical abort the best parameters seen so far are written before the error propagates.

    :param region: upper, mouth, or full
    :param manifest: DatasetManifest or manifest path
    :param out_path: checkpoint path; the training log goes next to it
    """
    prepare_run(run_config)
    partition = partition or FacePartition.default()
    manifest = load_manifest(manifest)
    train = region_frames([seq for seq, _ in manifest.load_split("train")], region, partition)
    val = region_frames([seq for seq, _ in manifest.load_split("val")], region, partition)
    config = run_config.vae_config(region, partition)
    model = initialise_model(lambda: RegionVae(config), run_config.seed, VAE_STREAM, REGION_CODES[region])
    budget = run_config["budget"]
    total_steps = step_budget(
        budget["vae_steps"], budget["vae_epochs"], len(train), run_config["optimizer"]["batch_size"]
    )
    training_log = TrainingLog(log_path_for(out_path), ["total", "mse", "kl", "val_mse"])
    try:
        result = fit_vae(
            model,
            train,
            val,
            run_config["optimizer"],
            total_steps,
            run_config.seed,
            log_every=run_config["training"]["log_every"],
            training_log=training_log,
        )
    except NumericalAbortError as n_e:
        save_model(out_path, "vae", model)
        n_e.diagnostics["checkpoint"] = out_path
        raise
    save_model(out_path, "vae", result.model)
    result.checkpoint = out_path
    logger.info(
        "Saved %s VAE to %s (best validation MSE %.6f at step %d)", region, out_path, result.best_val_mse, result.best_step
    )
    return result
