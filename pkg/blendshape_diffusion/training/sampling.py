"""
Inference: embed audio, sample each region's latent, decode, merge the regions, clamp to
[0, 1] and write EDBS files.
"""
import logging
from os.path import join
import numpy as np
import torch
from blendshape_diffusion.models.checkpoint import load_region_bundle
from blendshape_diffusion.models.diffusion import embed_audio, sample
from blendshape_diffusion.sequences.blendshapes import BlendshapeSequence, FacePartition, merge_regions
from blendshape_diffusion.sequences.io import load_audio_features, save_sequence
from blendshape_diffusion.shared.constants import SEQUENCE_SUFFIX
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.training.common import REGION_CODES, SAMPLE_STREAM
from blendshape_diffusion.util.file import create_directory_if_it_doesnt_exist
from blendshape_diffusion.util.seeding import torch_generator
from blendshape_diffusion.util.workers import ordered_map

logger = logging.getLogger(__name__)


def _bundle(bundle_or_path):
    return load_region_bundle(bundle_or_path) if isinstance(bundle_or_path, str) else bundle_or_path


def check_bundles(bundles, partition):
    """
    Raise ConfigurationError unless the bundles cover the face with matching condition widths.

    :param bundles: list of RegionBundle, either [full] or [upper, mouth]
    """
    regions = [bundle.region for bundle in bundles]
    if regions not in (["full"], ["upper", "mouth"]):
        raise ConfigurationError(f"Sampling needs an upper and a mouth checkpoint, or one full-face checkpoint; got {regions}")
    for bundle in bundles:
        expected = len(partition.region_indices(bundle.region))
        if bundle.vae.config.coefficients != expected:
            raise ConfigurationError(
                f"The {bundle.region} checkpoint decodes {bundle.vae.config.coefficients} coefficients, "
                f"the face partition has {expected}"
            )
        if bundle.denoiser.config.width != bundle.vae.config.width:
            raise ConfigurationError(
                f"The {bundle.region} denoiser width {bundle.denoiser.config.width} does not match "
                f"its VAE width {bundle.vae.config.width}"
            )
    widths = {bundle.denoiser.config.condition_width for bundle in bundles}
    if len(widths) != 1:
        raise ConfigurationError(f"Checkpoints disagree on the condition width: {sorted(widths)}")


def _region_sample(bundle, cond, steps, length, seed, index, sampler):
    generator = torch_generator(seed, SAMPLE_STREAM, index, REGION_CODES[bundle.region])
    dtype = bundle.denoiser.latent_projection.weight.dtype
    out = sample(
        bundle.denoiser,
        torch.as_tensor(cond, dtype=dtype),
        bundle.schedule,
        steps,
        length,
        bundle.vae,
        generator,
        sampler=sampler,
    )
    return out[0].detach().cpu().numpy()


def sample_sequence(bundles, track, steps=50, seed=0, index=0, sampler="ddpm", partition=None):
    """
    Generate one blendshape sequence for an audio feature track.

    Each region draws from its own stream (seed, index, region), so sequences can be sampled
    in any order and still be bit-identical.

    :param bundles: [upper, mouth] or [full] RegionBundles (or checkpoint paths)
    :param track: AudioFeatureTrack; the output has the track's length, id and label
    :return: BlendshapeSequence clamped to [0, 1]
    """
    partition = partition or FacePartition.default()
    bundles = [_bundle(bundle) for bundle in bundles]
    check_bundles(bundles, partition)
    cond = embed_audio(track)
    length = track.length
    if len(bundles) == 1:
        frames = _region_sample(bundles[0], cond, steps, length, seed, index, sampler)
    else:
        upper = _region_sample(bundles[0], cond, steps, length, seed, index, sampler)
        mouth = _region_sample(bundles[1], cond, steps, length, seed, index, sampler)
        frames = merge_regions(upper, mouth, partition)
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    return BlendshapeSequence(frames=frames, emotion=track.emotion, fps=track.fps, id=track.id)


def sample_to_file(bundles, audio_path, out_path, steps=50, seed=0, sampler="ddpm", partition=None):
    """Sample a sequence for one audio feature file and write it as EDBS"""
    track = load_audio_features(audio_path)
    seq = sample_sequence(bundles, track, steps=steps, seed=seed, index=0, sampler=sampler, partition=partition)
    save_sequence(seq, out_path)
    logger.info("Wrote %s (%d frames)", out_path, seq.length)
    return seq


def sample_tracks(bundles, tracks, out_directory, steps=50, seed=0, sampler="ddpm", partition=None):
    """
    Sample every track on the worker pool and write <track id>.edbs files.

    :return: list of written paths, in track order
    """
    bundles = [_bundle(bundle) for bundle in bundles]
    create_directory_if_it_doesnt_exist(out_directory)

    def _one(indexed):
        index, track = indexed
        seq = sample_sequence(bundles, track, steps=steps, seed=seed, index=index, sampler=sampler, partition=partition)
        path = join(out_directory, f"{track.id}{SEQUENCE_SUFFIX}")
        save_sequence(seq, path)
        return path

    paths = ordered_map(_one, enumerate(tracks))
    logger.info("Sampled %d sequences into %s", len(paths), out_directory)
    return paths
