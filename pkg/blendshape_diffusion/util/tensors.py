"""
Small tensor helpers shared by the models and the training loops.
"""
import hashlib
import numpy as np
import torch
from blendshape_diffusion.shared.exceptions import ShapeError


def pad_sequences(arrays, dtype=None):
    """
    Stack variable-length L×R arrays into a zero-padded batch.

    :param arrays: list of 2-D arrays (numpy or torch) with equal column counts
    :param dtype: torch dtype of the batch. Defaults to torch's default dtype.
    :return: (batch B×Lmax×R, padding mask B×Lmax with True on padded frames)
    """
    if not arrays:
        raise ShapeError("Cannot pad an empty list of sequences")
    dtype = dtype or torch.get_default_dtype()
    columns = {np.shape(array)[1] for array in arrays}
    if len(columns) != 1:
        raise ShapeError(f"Sequences in a batch must share a column count, got {sorted(columns)}")
    longest = max(np.shape(array)[0] for array in arrays)
    batch = torch.zeros((len(arrays), longest, columns.pop()), dtype=dtype)
    mask = torch.ones((len(arrays), longest), dtype=torch.bool)
    for index, array in enumerate(arrays):
        length = np.shape(array)[0]
        batch[index, :length] = torch.as_tensor(np.asarray(array), dtype=dtype)
        mask[index, :length] = False
    return batch, mask


def freeze(module):
    """Stop gradients into a module's parameters and switch it to eval mode"""
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    module.eval()
    return module


def is_frozen(module):
    """True when no parameter of the module requires a gradient"""
    return not any(parameter.requires_grad for parameter in module.parameters())


def parameter_digest(module):
    """sha256 over the names, shapes and bytes of a module's state dict"""
    sha = hashlib.sha256()
    for key, tensor in module.state_dict().items():
        sha.update(key.encode("utf-8"))
        sha.update(str(tuple(tensor.shape)).encode("utf-8"))
        sha.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return sha.hexdigest()


def all_finite(tensor):
    """True when every entry is finite"""
    return bool(torch.isfinite(tensor).all())
