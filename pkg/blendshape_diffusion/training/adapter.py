"""
Supervised pretraining of the emotion adapter on ground-truth upper-face sequences.
"""
import copy
import logging
from dataclasses import dataclass, field
import numpy as np
import torch
from blendshape_diffusion.models.adapter import (
    EmotionAdapter,
    adapter_forward,
    emotion_accuracy,
    emotion_cross_entropy,
)
from blendshape_diffusion.models.checkpoint import adapter_extra, save_model
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.shared.exceptions import DataError, NumericalAbortError
from blendshape_diffusion.training.common import (
    ADAPTER_STREAM,
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
from blendshape_diffusion.util.tensors import freeze, pad_sequences

logger = logging.getLogger(__name__)


@dataclass
class AdapterTrainingResult:
    """A frozen adapter with its per-step losses and batch accuracies"""

    model: EmotionAdapter
    val_accuracy: float
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    checkpoint: str = None


def fit_adapter(model, train_arrays, train_labels, val_arrays, val_labels, optimizer_section, total_steps, seed, log_every=20, training_log=None):
    """
    Cross-entropy training of the adapter, then freeze it.

    :param train_arrays: list of L×|upper_idx| arrays
    :param train_labels: emotion indices of train_arrays
    :raises DataError: when the labels cover fewer than 2 categories
    """
    categories = sorted(set(int(label) for label in train_labels))
    if len(categories) < 2:
        raise DataError(f"Adapter pretraining needs at least 2 emotion categories, found {categories}")
    dtype = model.frame_projection.weight.dtype
    batch_size = optimizer_section["batch_size"]
    labels = np.asarray(train_labels, dtype=np.int64)
    optimizer = build_optimizer(model, optimizer_section)
    losses, accuracies = [], []
    clock = Stopwatch()
    last_good = copy.deepcopy(model.state_dict())
    logger.info("Pretraining emotion adapter for %d steps over %d categories", total_steps, len(categories))
    for step, indices in batch_schedule(len(train_arrays), batch_size, total_steps, seed, ADAPTER_STREAM):
        model.train()
        batch, mask = pad_sequences([train_arrays[i] for i in indices], dtype)
        target = torch.as_tensor(labels[indices])
        optimizer.zero_grad()
        logits = adapter_forward(model, batch, mask if mask.any() else None)
        loss = emotion_cross_entropy(logits, target)
        try:
            check_finite(loss, step, "Adapter")
        except NumericalAbortError:
            model.load_state_dict(last_good)
            raise
        loss.backward()
        optimizer.step()
        if step % log_every == 0:
            last_good = copy.deepcopy(model.state_dict())
        accuracy = float((logits.argmax(dim=-1) == target).to(torch.float64).mean())
        losses.append(float(loss))
        accuracies.append(accuracy)
        logger.debug("step %d loss %.6f accuracy %.3f", step, float(loss), accuracy)
        if step % log_every == 0 or step == total_steps:
            model.eval()
            val_accuracy = emotion_accuracy(model, val_arrays, val_labels, batch_size)
            if training_log is not None:
                training_log.append(
                    step, clock.elapsed_ms(), {"loss": float(loss), "accuracy": accuracy, "val_accuracy": val_accuracy}
                )
            logger.info("Adapter step %d: loss %.6f validation accuracy %.3f", step, float(loss), val_accuracy)
    freeze(model)
    val_accuracy = emotion_accuracy(model, val_arrays, val_labels, batch_size)
    logger.info("Emotion adapter frozen with validation accuracy %.3f", val_accuracy)
    return AdapterTrainingResult(model=model, val_accuracy=val_accuracy, losses=losses, accuracies=accuracies)


def pretrain_adapter(run_config, manifest, out_path, partition=None):
    """
    Pretrain the emotion adapter on the train split's upper faces and labels, freeze it,
    and write its checkpoint with the category names.
    """
    prepare_run(run_config)
    partition = partition or FacePartition.default()
    manifest = load_manifest(manifest)
    train_sequences = [seq for seq, _ in manifest.load_split("train")]
    val_sequences = [seq for seq, _ in manifest.load_split("val")]
    config = run_config.adapter_config(partition)
    model = initialise_model(lambda: EmotionAdapter(config), run_config.seed, ADAPTER_STREAM)
    budget = run_config["budget"]
    total_steps = step_budget(
        budget["adapter_steps"], budget["adapter_epochs"], len(train_sequences), run_config["optimizer"]["batch_size"]
    )
    training_log = TrainingLog(log_path_for(out_path), ["loss", "accuracy", "val_accuracy"])
    try:
        result = fit_adapter(
            model,
            region_frames(train_sequences, "upper", partition),
            [int(seq.emotion) for seq in train_sequences],
            region_frames(val_sequences, "upper", partition),
            [int(seq.emotion) for seq in val_sequences],
            run_config["optimizer"],
            total_steps,
            run_config.seed,
            log_every=run_config["training"]["log_every"],
            training_log=training_log,
        )
    except NumericalAbortError as n_e:
        save_model(out_path, "adapter", freeze(model), adapter_extra())
        n_e.diagnostics["checkpoint"] = out_path
        raise
    save_model(out_path, "adapter", result.model, adapter_extra())
    result.checkpoint = out_path
    return result
