"""
"EDCK" checkpoint container shared by the VAEs, the denoisers and the emotion adapter.

Layout (little-endian): magic, u16 version, u32 config blob length, UTF-8 config blob of
key=value lines, u32 tensor count, then per tensor: u16 name length, name, u8 ndim,
ndim × u32 dims, u8 bytes per element (4 or 8), row-major payload.
"""
import logging
import struct
from dataclasses import dataclass, fields
from collections import OrderedDict
import numpy as np
import torch
from blendshape_diffusion.models.adapter import AdapterConfig, EmotionAdapter
from blendshape_diffusion.models.diffusion import Denoiser, DenoiserConfig, NoiseSchedule, make_schedule
from blendshape_diffusion.models.vae import RegionVae, VaeConfig
from blendshape_diffusion.shared.constants import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    EMOTION_NAMES,
)
from blendshape_diffusion.shared.exceptions import ConfigurationError, SequenceFormatError
from blendshape_diffusion.util.tensors import freeze

logger = logging.getLogger(__name__)

PAYLOAD_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
MODEL_KINDS = {
    "vae": (VaeConfig, RegionVae),
    "denoiser": (DenoiserConfig, Denoiser),
    "adapter": (AdapterConfig, EmotionAdapter),
}


def save_checkpoint(path, config, tensors):
    """
    Write a checkpoint.

    :param config: ordered mapping of str keys to values; written as key=value lines
    :param tensors: ordered mapping of names to float32 or float64 tensors
    """
    blob = "".join(f"{key}={value}\n" for key, value in config.items()).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(blob)), blob]
    chunks.append(struct.pack("<I", len(tensors)))
    for name, tensor in tensors.items():
        array = tensor.detach().cpu().numpy()
        itemsize = 8 if array.dtype == np.float64 else 4
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(struct.pack("<B", itemsize))
        chunks.append(np.ascontiguousarray(array, dtype=PAYLOAD_DTYPES[itemsize]).tobytes())
    with open(path, "wb") as file_obj:
        file_obj.write(b"".join(chunks))
    logger.debug("Wrote checkpoint %s with %d tensors", path, len(tensors))


class _Reader:
    def __init__(self, blob, path):
        self.blob, self.path, self.offset = blob, path, 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.blob):
            raise SequenceFormatError(f"{self.path}: checkpoint is truncated")
        values = struct.unpack_from(fmt, self.blob, self.offset)
        self.offset += size
        return values

    def raw(self, size):
        if self.offset + size > len(self.blob):
            raise SequenceFormatError(f"{self.path}: checkpoint is truncated")
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk


def load_checkpoint(path):
    """
    Read a checkpoint.

    :return: (OrderedDict of config strings, OrderedDict of tensors)
    """
    with open(path, "rb") as file_obj:
        reader = _Reader(file_obj.read(), path)
    if reader.raw(4) != CHECKPOINT_MAGIC:
        raise SequenceFormatError(f"{path}: not a checkpoint (bad magic bytes)")
    version, blob_length = reader.take("<HI")
    if version != CHECKPOINT_VERSION:
        raise SequenceFormatError(f"{path}: unsupported checkpoint version {version}")
    config = OrderedDict()
    for line in reader.raw(blob_length).decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    tensors = OrderedDict()
    (count,) = reader.take("<I")
    for _ in range(count):
        (name_length,) = reader.take("<H")
        name = reader.raw(name_length).decode("utf-8")
        (ndim,) = reader.take("<B")
        shape = reader.take(f"<{ndim}I") if ndim else ()
        (itemsize,) = reader.take("<B")
        if itemsize not in PAYLOAD_DTYPES:
            raise SequenceFormatError(f"{path}: tensor {name} has unsupported element size {itemsize}")
        payload = reader.raw(int(np.prod(shape, dtype=np.int64)) * itemsize)
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPES[itemsize]).reshape(shape)
        tensors[name] = torch.from_numpy(array.astype(np.float64 if itemsize == 8 else np.float32))
    if reader.offset != len(reader.blob):
        raise SequenceFormatError(f"{path}: trailing bytes after the last tensor")
    return config, tensors


def _parse(text, kind):
    if kind is bool:
        if text not in ("True", "False"):
            raise ConfigurationError(f"Expected True or False, got {text!r}")
        return text == "True"
    try:
        return kind(text)
    except ValueError as v_e:
        raise ConfigurationError(f"Could not parse checkpoint value {text!r} as {kind.__name__}") from v_e


def config_to_blob(kind, model_config, extra=None):
    """Flatten a model config dataclass into section-prefixed key=value pairs"""
    blob = OrderedDict([("kind", kind)])
    for key, value in model_config.to_dict().items():
        blob[f"{kind}.{key}"] = value
    for key, value in (extra or {}).items():
        blob[key] = value
    return blob


def config_from_blob(kind, blob):
    """Rebuild a model config dataclass from section-prefixed key=value pairs"""
    config_class = MODEL_KINDS[kind][0]
    values = {}
    for field in fields(config_class):
        key = f"{kind}.{field.name}"
        if key not in blob:
            raise ConfigurationError(f"Checkpoint is missing config key {key}")
        values[field.name] = _parse(blob[key], field.type)
    return config_class(**values)


def save_model(path, kind, model, extra=None):
    """Write a model's config and state dict"""
    save_checkpoint(path, config_to_blob(kind, model.config, extra), model.state_dict())


def load_model(path, expected_kind=None):
    """
    Rebuild a model from its checkpoint.

    :return: (model in the stored precision, OrderedDict of the config blob)
    """
    blob, tensors = load_checkpoint(path)
    kind = blob.get("kind")
    if kind not in MODEL_KINDS:
        raise SequenceFormatError(f"{path}: unknown checkpoint kind {kind!r}")
    if expected_kind and kind != expected_kind:
        raise ConfigurationError(f"{path}: expected a {expected_kind} checkpoint, found {kind}")
    model = MODEL_KINDS[kind][1](config_from_blob(kind, blob))
    dtype = next(iter(tensors.values())).dtype if tensors else torch.get_default_dtype()
    model = model.to(dtype)
    model.load_state_dict(tensors)
    return model, blob


def adapter_extra():
    """Category names recorded in adapter checkpoints"""
    return {"adapter.categories": ",".join(EMOTION_NAMES)}


@dataclass
class RegionBundle:
    """A trained denoiser with the frozen VAE and schedule it was trained against"""

    region: str
    denoiser: Denoiser
    vae: RegionVae
    schedule: NoiseSchedule
    blob: OrderedDict


def _prefixed(prefix, state):
    return OrderedDict((f"{prefix}.{name}", tensor) for name, tensor in state.items())


def _unprefixed(prefix, tensors):
    marker = f"{prefix}."
    return OrderedDict(
        (name[len(marker) :], tensor) for name, tensor in tensors.items() if name.startswith(marker)
    )


def save_region_bundle(path, denoiser, vae, schedule_blob, extra=None):
    """
    Write a sampling-ready checkpoint: denoiser and VAE configs and tensors, plus the schedule
    parameters (schedule.steps, schedule.beta_start, schedule.beta_end).
    """
    blob = OrderedDict([("kind", "region"), ("region", vae.config.region)])
    for kind, model_config in (("denoiser", denoiser.config), ("vae", vae.config)):
        blob.update((key, value) for key, value in config_to_blob(kind, model_config).items() if key != "kind")
    blob.update(schedule_blob)
    blob.update(extra or {})
    tensors = _prefixed("denoiser", denoiser.state_dict())
    tensors.update(_prefixed("vae", vae.state_dict()))
    save_checkpoint(path, blob, tensors)


def load_region_bundle(path):
    """Rebuild a RegionBundle; the VAE comes back frozen"""
    blob, tensors = load_checkpoint(path)
    if blob.get("kind") != "region":
        raise ConfigurationError(f"{path}: expected a region checkpoint, found {blob.get('kind')!r}")
    denoiser_config = config_from_blob("denoiser", blob)
    vae_config = config_from_blob("vae", blob)
    if vae_config.region != blob.get("region"):
        raise SequenceFormatError(f"{path}: region tag does not match the stored VAE")
    dtype = next(iter(tensors.values())).dtype
    denoiser = Denoiser(denoiser_config).to(dtype)
    denoiser.load_state_dict(_unprefixed("denoiser", tensors))
    vae = RegionVae(vae_config).to(dtype)
    vae.load_state_dict(_unprefixed("vae", tensors))
    schedule = make_schedule(
        _parse(blob["schedule.steps"], int),
        _parse(blob["schedule.beta_start"], float),
        _parse(blob["schedule.beta_end"], float),
    )
    return RegionBundle(
        region=vae_config.region,
        denoiser=freeze(denoiser),
        vae=freeze(vae),
        schedule=schedule,
        blob=blob,
    )
