"""
Seed handling. Every random stream is derived from (seed, index) so that per-item work
can run in any order or in parallel and still produce the same bytes.
"""
import numpy as np
import torch

PRECISIONS = {32: torch.float32, 64: torch.float64}


def derive_seed(seed, *indices):
    """A 32-bit seed derived from a base seed and any number of integer indices"""
    sequence = np.random.SeedSequence([int(seed)] + [int(index) for index in indices])
    return int(sequence.generate_state(1)[0])


def numpy_generator(seed, *indices):
    """A numpy Generator for the stream (seed, *indices)"""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(i) for i in indices]))


def torch_generator(seed, *indices):
    """A CPU torch.Generator for the stream (seed, *indices)"""
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *indices))
    return generator


def set_precision(bits):
    """Set the default floating point dtype for model parameters and tensors"""
    if bits not in PRECISIONS:
        raise ValueError(f"Precision must be one of {sorted(PRECISIONS)}, got {bits}")
    torch.set_default_dtype(PRECISIONS[bits])
    return PRECISIONS[bits]


def seed_everything(seed):
    """Seed torch's global generator (used for parameter initialisation) and ask for deterministic kernels"""
    torch.manual_seed(derive_seed(seed))
    torch.use_deterministic_algorithms(True, warn_only=True)
