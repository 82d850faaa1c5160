"""
Pieces shared by the training loops: optimizer construction, deterministic batch order,
step budgets, the finite-loss guard and seeded model initialisation.
"""
import logging
import math
import time
from os.path import splitext
import numpy as np
import torch
from blendshape_diffusion.sequences.blendshapes import partition_face
from blendshape_diffusion.sequences.io import DatasetManifest, read_manifest
from blendshape_diffusion.shared.exceptions import ConfigurationError, NumericalAbortError
from blendshape_diffusion.util.seeding import derive_seed, numpy_generator, seed_everything, set_precision
from blendshape_diffusion.util.tensors import all_finite
from blendshape_diffusion.util.workers import configure_torch_threads

logger = logging.getLogger(__name__)

# Random stream identifiers. Every training loop derives its generators from (seed, stream, ...).
VAE_STREAM = 10
ADAPTER_STREAM = 20
DIFFUSION_STREAM = 30
SAMPLE_STREAM = 40
REGION_CODES = {"upper": 0, "mouth": 1, "full": 2}


def build_optimizer(model, optimizer_section):
    """AdamW over the trainable parameters, constant learning rate"""
    return torch.optim.AdamW(
        [parameter for parameter in model.parameters() if parameter.requires_grad],
        lr=optimizer_section["lr"],
        betas=(optimizer_section["beta1"], optimizer_section["beta2"]),
        weight_decay=optimizer_section["weight_decay"],
    )


def initialise_model(factory, seed, *indices):
    """Construct a model with parameters drawn from the stream (seed, *indices)"""
    torch.manual_seed(derive_seed(seed, *indices))
    return factory()


def step_budget(steps, epochs, item_count, batch_size):
    """Epochs win over steps when set: epochs × ceil(items / batch)"""
    if epochs:
        return epochs * math.ceil(item_count / batch_size)
    return steps


def batch_schedule(item_count, batch_size, total_steps, seed, *indices):
    """
    Yield (step, index array) pairs. Each epoch is a fresh permutation drawn from
    (seed, *indices, epoch); the last batch of an epoch may be short.
    """
    if item_count == 0:
        return
    step = 0
    epoch = 0
    while step < total_steps:
        order = numpy_generator(seed, *indices, epoch).permutation(item_count)
        for start in range(0, item_count, batch_size):
            if step >= total_steps:
                return
            step += 1
            yield step, order[start : start + batch_size]
        epoch += 1


def moving_average(values, window):
    """Trailing moving average; empty when there are fewer values than the window"""
    values = np.asarray(values, dtype=np.float64)
    if values.size < window:
        return np.zeros(0)
    return np.convolve(values, np.ones(window) / window, mode="valid")


def check_finite(loss, step, what, **diagnostics):
    """Raise NumericalAbortError when a loss is NaN or infinite"""
    if all_finite(loss):
        return
    details = {"step": step, "loss": float(loss.detach().flatten()[0])}
    details.update(diagnostics)
    logger.critical("%s loss became non-finite at step %d: %s", what, step, details)
    raise NumericalAbortError(f"{what} loss is not finite at step {step}", details)


def region_frames(sequences, region, partition):
    """Column slices of each sequence for one face region"""
    if region == "full":
        return [np.asarray(seq.frames) for seq in sequences]
    upper_or_mouth = 0 if region == "upper" else 1
    return [partition_face(seq, partition)[upper_or_mouth] for seq in sequences]


class Stopwatch:
    """Milliseconds since construction, for the wall_ms column of training logs"""

    def __init__(self):
        self.start = time.perf_counter()

    def elapsed_ms(self):
        """Elapsed milliseconds"""
        return (time.perf_counter() - self.start) * 1000.0


def prepare_run(run_config):
    """Apply the run's precision, deterministic kernels and the worker thread cap"""
    dtype = set_precision(run_config.precision)
    seed_everything(run_config.seed)
    configure_torch_threads()
    return dtype


def load_manifest(manifest):
    """Accept a DatasetManifest or a manifest path"""
    if isinstance(manifest, DatasetManifest):
        return manifest
    if not manifest:
        raise ConfigurationError("No dataset manifest given; set dataset.manifest or pass --manifest")
    return read_manifest(manifest)


def log_path_for(checkpoint_path):
    """Training log written next to a checkpoint"""
    return splitext(checkpoint_path)[0] + ".log"
