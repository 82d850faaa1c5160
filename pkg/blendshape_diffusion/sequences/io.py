"""
Binary sequence and audio-feature files, and the tab-separated dataset manifest.

Both binary files share one little-endian header:
magic (4 bytes), u16 version, u16 columns, u32 frames, u16 fps, u8 emotion index,
followed by frames×columns float32 values, row-major.
"""
import logging
import struct
from dataclasses import dataclass, field
from os.path import basename, dirname, join, splitext
import numpy as np
import pandas
from blendshape_diffusion.shared.constants import (
    AUDIO_FEATURE_CHANNELS,
    AUDIO_MAGIC,
    FILE_FORMAT_VERSION,
    MANIFEST_VERSION,
    NUM_BLENDSHAPES,
    SEQUENCE_MAGIC,
    SPLIT_NAMES,
)
from blendshape_diffusion.shared.exceptions import (
    DataError,
    SequenceFormatError,
    SequenceValidationError,
)
from blendshape_diffusion.sequences.blendshapes import (
    AudioFeatureTrack,
    BlendshapeSequence,
    require_valid,
    validate_sequence,
)

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<4sHHIHB")
PAYLOAD_DTYPE = np.dtype("<f4")


def _write_matrix(path, magic, matrix, fps, emotion):
    matrix = np.ascontiguousarray(matrix, dtype=PAYLOAD_DTYPE)
    header = HEADER.pack(magic, FILE_FORMAT_VERSION, matrix.shape[1], matrix.shape[0], int(fps), int(emotion))
    with open(path, "wb") as file_obj:
        file_obj.write(header)
        file_obj.write(matrix.tobytes())


def _read_matrix(path, magic):
    with open(path, "rb") as file_obj:
        blob = file_obj.read()
    if len(blob) < HEADER.size:
        raise SequenceFormatError(f"{path}: file is shorter than the {HEADER.size}-byte header")
    found_magic, version, columns, frames, fps, emotion = HEADER.unpack_from(blob)
    if found_magic != magic:
        raise SequenceFormatError(f"{path}: expected magic {magic!r}, found {found_magic!r}")
    if version != FILE_FORMAT_VERSION:
        raise SequenceFormatError(f"{path}: unsupported format version {version}")
    expected = HEADER.size + frames * columns * PAYLOAD_DTYPE.itemsize
    if len(blob) != expected:
        raise SequenceFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    matrix = np.frombuffer(blob, dtype=PAYLOAD_DTYPE, offset=HEADER.size).reshape(frames, columns)
    return matrix.astype(np.float32), fps, emotion


def _stem(path):
    return splitext(basename(path))[0]


def save_sequence(seq, path):
    """
    Write a BlendshapeSequence as an EDBS file. Values are stored as float32.

    :raises SequenceValidationError: when the sequence violates an invariant
    """
    require_valid(seq, num_coefficients=NUM_BLENDSHAPES)
    _write_matrix(path, SEQUENCE_MAGIC, seq.frames, seq.fps, seq.emotion)
    logger.debug("Wrote %s (%d frames)", path, seq.length)


def load_sequence(path):
    """
    Read an EDBS file. The sequence id is the file name without its suffix.

    :raises SequenceFormatError: bad magic bytes, version or size
    :raises SequenceValidationError: NaN or other invariant violations in the payload
    """
    frames, fps, emotion = _read_matrix(path, SEQUENCE_MAGIC)
    seq = BlendshapeSequence(frames=frames, emotion=emotion, fps=fps, id=_stem(path))
    result = validate_sequence(seq)
    if not result.ok:
        raise SequenceValidationError(
            f"{path}: " + "; ".join(v.message for v in result.violations[:5]), result.violations
        )
    return seq


def save_audio_features(track, path):
    """Write an AudioFeatureTrack as an EDAF file"""
    require_valid(track.features, num_coefficients=AUDIO_FEATURE_CHANNELS, what="audio feature track")
    _write_matrix(path, AUDIO_MAGIC, track.features, track.fps, track.emotion)


def load_audio_features(path):
    """Read an EDAF file"""
    features, fps, emotion = _read_matrix(path, AUDIO_MAGIC)
    require_valid(features, num_coefficients=AUDIO_FEATURE_CHANNELS, what=f"audio feature track {path}")
    return AudioFeatureTrack(features=features, fps=fps, emotion=emotion, id=_stem(path))


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset item. Paths are relative to the manifest's directory."""

    seq_path: str
    audio_path: str
    emotion: int
    split: str

    @property
    def id(self):  # pylint: disable=invalid-name
        """Sequence id, taken from the sequence file name"""
        return _stem(self.seq_path)


@dataclass
class DatasetManifest:
    """Dataset index written by the synthetic generator"""

    entries: list
    seed: int
    version: int = MANIFEST_VERSION
    metadata: dict = field(default_factory=dict)
    root: str = ""

    def split(self, name):
        """Entries of one split, in manifest order"""
        return [entry for entry in self.entries if entry.split == name]

    def resolve(self, relative_path):
        """Absolute location of a manifest-relative path"""
        return join(self.root, relative_path)

    def load_split(self, name):
        """Load (sequence, audio track) pairs for one split"""
        return [
            (load_sequence(self.resolve(e.seq_path)), load_audio_features(self.resolve(e.audio_path)))
            for e in self.split(name)
        ]


def check_manifest(manifest):
    """Raise DataError unless paths are unique and every split is nonempty"""
    paths = [e.seq_path for e in manifest.entries] + [e.audio_path for e in manifest.entries]
    if len(paths) != len(set(paths)):
        raise DataError("Manifest paths must be unique")
    for name in SPLIT_NAMES:
        if not manifest.split(name):
            raise DataError(f"Manifest split {name!r} is empty")
    unknown = {e.split for e in manifest.entries} - set(SPLIT_NAMES)
    if unknown:
        raise DataError(f"Unknown manifest splits: {sorted(unknown)}")


def write_manifest(manifest, path):
    """
    Write the manifest: '#version', '#seed' and '#key value' metadata lines, a commented column
    header, then one tab-separated row per entry.
    """
    check_manifest(manifest)
    lines = [f"#version {manifest.version}", f"#seed {manifest.seed}"]
    lines.extend(f"#{key} {value}" for key, value in manifest.metadata.items())
    lines.append("#seq_path\taudio_path\temotion\tsplit")
    lines.extend(f"{e.seq_path}\t{e.audio_path}\t{e.emotion}\t{e.split}" for e in manifest.entries)
    with open(path, "w", encoding="utf-8", newline="\n") as file_obj:
        file_obj.write("\n".join(lines) + "\n")


def read_manifest(path):
    """Read a manifest written by write_manifest"""
    header = {}
    with open(path, "r", encoding="utf-8") as file_obj:
        for line in file_obj:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].rstrip("\n").partition(" ")
            if "\t" not in key:
                header[key] = value
    if "version" not in header or "seed" not in header:
        raise SequenceFormatError(f"{path}: manifest is missing its #version or #seed line")
    if int(header["version"]) != MANIFEST_VERSION:
        raise SequenceFormatError(f"{path}: unsupported manifest version {header['version']}")
    table = pandas.read_csv(
        path,
        sep="\t",
        comment="#",
        header=None,
        names=["seq_path", "audio_path", "emotion", "split"],
        dtype={"seq_path": str, "audio_path": str, "emotion": int, "split": str},
    )
    entries = [
        ManifestEntry(row.seq_path, row.audio_path, int(row.emotion), row.split)
        for row in table.itertuples(index=False)
    ]
    metadata = {k: v for k, v in header.items() if k not in ("version", "seed")}
    manifest = DatasetManifest(
        entries=entries,
        seed=int(header["seed"]),
        version=int(header["version"]),
        metadata=metadata,
        root=dirname(path),
    )
    check_manifest(manifest)
    return manifest
