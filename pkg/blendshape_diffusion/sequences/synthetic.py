"""
Deterministic synthetic dataset of paired blendshape sequences and audio-feature tracks.

Each item derives all of its randomness from (seed, item index), so the generator is a pure
function of (n, seed, length) and items can be produced in parallel.

- Audio features: 8 smooth articulation envelopes in [0, 1] followed by 8 emotion channels
  carrying the label's signature plus Gaussian noise.
- Mouth coefficients: a fixed affine-sigmoid map of the articulation envelopes. The map is
  derived from the dataset seed and recorded in the manifest metadata.
- Upper-face coefficients: per-emotion template amplitudes with amplitude and phase jitter,
  plus blinks.
"""
import logging
import re
from dataclasses import dataclass
from os.path import join
import numpy as np
from blendshape_diffusion.shared.constants import (
    ARTICULATION_CHANNELS,
    AUDIO_SUFFIX,
    BLENDSHAPE_LAYOUT_VERSION,
    BLENDSHAPE_NAMES,
    DEFAULT_FPS,
    DEFAULT_SEQUENCE_FRAMES,
    EMOTION_CHANNEL_NOISE,
    EMOTION_CHANNELS,
    EMOTION_NAMES,
    MANIFEST_FILE_NAME,
    MIN_SEQUENCE_FRAMES,
    SEQUENCE_SUFFIX,
)
from blendshape_diffusion.shared.exceptions import ConfigurationError, DataError
from blendshape_diffusion.sequences.blendshapes import (
    AudioFeatureTrack,
    BlendshapeSequence,
    Emotion,
    FacePartition,
    merge_regions,
)
from blendshape_diffusion.sequences.io import (
    DatasetManifest,
    ManifestEntry,
    save_audio_features,
    save_sequence,
    write_manifest,
)
from blendshape_diffusion.util.file import create_directory_if_it_doesnt_exist
from blendshape_diffusion.util.seeding import numpy_generator
from blendshape_diffusion.util.workers import ordered_map

logger = logging.getLogger(__name__)

# Stream ids mixed into the seed so that the map, the split and the items never share draws
MOUTH_MAP_STREAM = 1
SPLIT_STREAM = 2
ITEM_STREAM = 3

AMPLITUDE_JITTER = 0.1
SPLIT_FRACTIONS = {"val": 0.1, "test": 0.1}

# Template amplitudes of upper-face coefficients per emotion
UPPER_TEMPLATES = {
    Emotion.NEUTRAL: {"eyeLookDownLeft": 0.1, "eyeLookDownRight": 0.1},
    Emotion.ANGRY: {
        "browDownLeft": 0.7,
        "browDownRight": 0.7,
        "eyeSquintLeft": 0.4,
        "eyeSquintRight": 0.4,
    },
    Emotion.DOUBTFUL: {
        "browDownLeft": 0.5,
        "browOuterUpRight": 0.5,
        "eyeSquintLeft": 0.3,
        "eyeLookUpRight": 0.2,
    },
    Emotion.SURPRISED: {
        "browInnerUp": 0.8,
        "browOuterUpLeft": 0.8,
        "browOuterUpRight": 0.8,
        "eyeWideLeft": 0.7,
        "eyeWideRight": 0.7,
    },
    Emotion.HAPPY: {
        "browInnerUp": 0.6,
        "browOuterUpLeft": 0.6,
        "browOuterUpRight": 0.6,
        "eyeSquintLeft": 0.5,
        "eyeSquintRight": 0.5,
    },
    Emotion.SAD: {
        "browInnerUp": 0.7,
        "browDownLeft": 0.2,
        "browDownRight": 0.2,
        "eyeLookDownLeft": 0.4,
        "eyeLookDownRight": 0.4,
    },
    Emotion.SCARED: {
        "browInnerUp": 0.7,
        "browOuterUpLeft": 0.3,
        "browOuterUpRight": 0.3,
        "eyeWideLeft": 0.6,
        "eyeWideRight": 0.6,
        "eyeLookOutLeft": 0.2,
    },
    Emotion.SERIOUS: {
        "browDownLeft": 0.4,
        "browDownRight": 0.4,
        "eyeSquintLeft": 0.2,
        "eyeSquintRight": 0.2,
    },
    Emotion.PROUD: {
        "browOuterUpLeft": 0.3,
        "browOuterUpRight": 0.3,
        "eyeLookUpLeft": 0.3,
        "eyeLookUpRight": 0.3,
        "eyeSquintLeft": 0.2,
        "eyeSquintRight": 0.2,
    },
}

# Emotion channel signature: neutral is silent, each other category lights one channel
EMOTION_SIGNATURES = np.vstack([np.zeros(EMOTION_CHANNELS), np.eye(EMOTION_CHANNELS)])


@dataclass(frozen=True)
class MouthMap:
    """mouth = sigmoid(articulation @ weights.T + bias), clipped to [0, 1]"""

    weights: np.ndarray
    bias: np.ndarray
    seed: int

    def describe(self):
        """The manifest metadata value that identifies this map"""
        return f"affine-sigmoid seed={self.seed}"


def mouth_map_for_seed(seed, mouth_columns=None):
    """The ground-truth articulation→mouth map of the dataset generated with this seed"""
    mouth_columns = mouth_columns or len(FacePartition.default().mouth_idx)
    rng = numpy_generator(seed, MOUTH_MAP_STREAM)
    weights = rng.normal(0.0, 1.5, size=(mouth_columns, ARTICULATION_CHANNELS))
    bias = rng.normal(-1.0, 0.5, size=mouth_columns)
    return MouthMap(weights=weights, bias=bias, seed=int(seed))


def mouth_map_from_manifest(manifest):
    """Rebuild the ground-truth mouth map recorded in a manifest's metadata"""
    match = re.fullmatch(r"affine-sigmoid seed=(\d+)", manifest.metadata.get("mouth_map", ""))
    if not match:
        raise DataError("Manifest does not record a mouth map")
    return mouth_map_for_seed(int(match.group(1)))


def apply_mouth_map(articulation, mouth_map):
    """
    Evaluate the mouth map on L×8 articulation envelopes.

    :return: L×32 float64 mouth coefficients in [0, 1]
    """
    articulation = np.asarray(articulation, dtype=np.float64)
    activation = articulation @ mouth_map.weights.T + mouth_map.bias
    return np.clip(1.0 / (1.0 + np.exp(-activation)), 0.0, 1.0)


def _articulation_envelopes(rng, length, fps):
    """Syllable-rate envelopes in [0, 1], rounded to float32 as they are stored"""
    seconds = np.arange(length) / fps
    envelopes = np.empty((length, ARTICULATION_CHANNELS))
    for channel in range(ARTICULATION_CHANNELS):
        freqs = rng.uniform(1.5, 5.0, size=3)
        phases = rng.uniform(0.0, 2 * np.pi, size=3)
        weights = rng.uniform(0.5, 1.0, size=3)
        wave = (weights[:, None] * np.sin(2 * np.pi * freqs[:, None] * seconds + phases[:, None])).sum(axis=0)
        envelopes[:, channel] = 0.5 + 0.5 * np.tanh(wave)
    return envelopes.astype(np.float32).astype(np.float64)


def _upper_face(rng, emotion, length, fps, part):
    """Template amplitudes with ±AMPLITUDE_JITTER, a slow sway, and a few blinks"""
    seconds = np.arange(length) / fps
    upper_names = [BLENDSHAPE_NAMES[i] for i in part.upper_idx]
    upper = np.zeros((length, len(upper_names)))
    for name, amplitude in UPPER_TEMPLATES[emotion].items():
        jittered = amplitude + rng.uniform(-AMPLITUDE_JITTER, AMPLITUDE_JITTER)
        sway = 0.8 + 0.2 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * seconds + rng.uniform(0, 2 * np.pi))
        upper[:, upper_names.index(name)] = jittered * sway
    blink = np.zeros(length)
    for start in rng.integers(0, max(length - 4, 1), size=rng.integers(0, 3)):
        shape = np.array([0.3, 0.8, 1.0, 0.8, 0.3])[: length - start]
        blink[start : start + len(shape)] = np.maximum(blink[start : start + len(shape)], shape)
    for name in ("eyeBlinkLeft", "eyeBlinkRight"):
        column = upper_names.index(name)
        upper[:, column] = upper[:, column] + blink
    return upper


def synthesize_item(seed, index, length_frames, mouth_map, fps=DEFAULT_FPS, part=None):
    """
    Build one (BlendshapeSequence, AudioFeatureTrack) pair. The emotion is index mod 9.

    :return: (sequence with float32 frames clipped to [0, 1], float32 feature track)
    """
    part = part or FacePartition.default()
    emotion = Emotion(index % len(EMOTION_NAMES))
    rng = numpy_generator(seed, ITEM_STREAM, index)
    articulation = _articulation_envelopes(rng, length_frames, fps)
    emotion_features = EMOTION_SIGNATURES[emotion] + rng.normal(
        0.0, EMOTION_CHANNEL_NOISE, size=(length_frames, EMOTION_CHANNELS)
    )
    upper = _upper_face(rng, emotion, length_frames, fps, part)
    mouth = apply_mouth_map(articulation, mouth_map)
    frames = np.clip(merge_regions(upper, mouth, part), 0.0, 1.0).astype(np.float32)
    features = np.hstack([articulation, emotion_features]).astype(np.float32)
    item_id = f"seq_{index:05d}"
    return (
        BlendshapeSequence(frames=frames, emotion=emotion, fps=fps, id=item_id),
        AudioFeatureTrack(features=features, fps=fps, emotion=emotion, id=item_id),
    )


def assign_splits(n, seed):
    """80/10/10 split of item indices; val and test always get at least one item"""
    order = numpy_generator(seed, SPLIT_STREAM).permutation(n)
    sizes = {name: max(1, int(np.floor(n * fraction + 0.5))) for name, fraction in SPLIT_FRACTIONS.items()}
    splits = ["train"] * n
    for position, index in enumerate(order):
        if position < sizes["test"]:
            splits[index] = "test"
        elif position < sizes["test"] + sizes["val"]:
            splits[index] = "val"
    return splits


def generate_synthetic_dataset(out_dir, n, seed, length_frames=DEFAULT_SEQUENCE_FRAMES, fps=DEFAULT_FPS):
    """
    Write n sequence/audio pairs and their manifest under out_dir.

    :param out_dir: destination directory; sequences/ and audio/ are created inside it
    :param n: number of items, at least one per emotion category
    :param seed: generator seed
    :param length_frames: frames per sequence
    :rtype: DatasetManifest
    """
    if n < len(EMOTION_NAMES):
        raise ConfigurationError(
            f"At least {len(EMOTION_NAMES)} sequences are needed (one per emotion), got {n}"
        )
    if length_frames < MIN_SEQUENCE_FRAMES:
        raise ConfigurationError(f"Sequences need at least {MIN_SEQUENCE_FRAMES} frames, got {length_frames}")
    if seed < 0:
        raise ConfigurationError(f"Seed must be non-negative, got {seed}")
    part = FacePartition.default()
    mouth_map = mouth_map_for_seed(seed, len(part.mouth_idx))
    create_directory_if_it_doesnt_exist(join(out_dir, "sequences"))
    create_directory_if_it_doesnt_exist(join(out_dir, "audio"))
    splits = assign_splits(n, seed)

    def write_item(index):
        seq, track = synthesize_item(seed, index, length_frames, mouth_map, fps=fps, part=part)
        seq_path = join("sequences", seq.id + SEQUENCE_SUFFIX)
        audio_path = join("audio", track.id + AUDIO_SUFFIX)
        save_sequence(seq, join(out_dir, seq_path))
        save_audio_features(track, join(out_dir, audio_path))
        return ManifestEntry(seq_path, audio_path, int(seq.emotion), splits[index])

    entries = ordered_map(write_item, range(n))
    manifest = DatasetManifest(
        entries=entries,
        seed=int(seed),
        metadata={
            "frames": length_frames,
            "fps": fps,
            "blendshape_layout": BLENDSHAPE_LAYOUT_VERSION,
            "mouth_map": mouth_map.describe(),
        },
        root=out_dir,
    )
    write_manifest(manifest, join(out_dir, MANIFEST_FILE_NAME))
    logger.info("Generated %d synthetic sequences in %s", n, out_dir)
    return manifest


def emotion_counts(manifest):
    """Number of entries per emotion name, in category order"""
    counts = {name: 0 for name in EMOTION_NAMES}
    for entry in manifest.entries:
        counts[EMOTION_NAMES[entry.emotion]] += 1
    return counts
