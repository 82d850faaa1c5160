"""
Blendshape sequence data model: emotion labels, the upper-face / mouth partition, and
sequence validation.
"""
import logging
from dataclasses import dataclass, field
from enum import IntEnum
import numpy as np
from blendshape_diffusion.shared.constants import (
    BLENDSHAPE_NAMES,
    BROW_NAMES,
    DEFAULT_FPS,
    EMOTION_NAMES,
    MIN_SEQUENCE_FRAMES,
    NUM_BLENDSHAPES,
    UPPER_FACE_PREFIXES,
)
from blendshape_diffusion.shared.exceptions import (
    InvalidPartitionError,
    SequenceValidationError,
    ShapeError,
)

logger = logging.getLogger(__name__)


class Emotion(IntEnum):
    """The nine emotion categories, stored by index"""

    NEUTRAL = 0
    ANGRY = 1
    DOUBTFUL = 2
    SURPRISED = 3
    HAPPY = 4
    SAD = 5
    SCARED = 6
    SERIOUS = 7
    PROUD = 8

    @property
    def label(self):
        """Lowercase category name"""
        return EMOTION_NAMES[self.value]

    @classmethod
    def from_name(cls, category):
        """Look up a category by its lowercase name"""
        return cls(EMOTION_NAMES.index(category.lower()))


@dataclass
class BlendshapeSequence:
    """L×51 coefficient frames with their frame rate, emotion label and identifier"""

    frames: np.ndarray
    emotion: Emotion = Emotion.NEUTRAL
    fps: int = DEFAULT_FPS
    id: str = ""  # pylint: disable=invalid-name

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        self.emotion = Emotion(int(self.emotion))

    @property
    def length(self):
        """Number of frames L"""
        return self.frames.shape[0]


@dataclass
class AudioFeatureTrack:
    """L×F synthetic audio features paired with one blendshape sequence"""

    features: np.ndarray
    fps: int = DEFAULT_FPS
    emotion: Emotion = Emotion.NEUTRAL
    id: str = ""  # pylint: disable=invalid-name

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.emotion = Emotion(int(self.emotion))

    @property
    def length(self):
        """Number of frames L"""
        return self.features.shape[0]


@dataclass(frozen=True)
class FacePartition:
    """
    Disjoint, sorted index lists splitting the 51 coefficients into the upper face and the mouth.
    brow_idx is the eyebrow subset of upper_idx.
    """

    upper_idx: tuple
    mouth_idx: tuple
    brow_idx: tuple
    num_coefficients: int = NUM_BLENDSHAPES

    def __post_init__(self):
        object.__setattr__(self, "upper_idx", tuple(int(i) for i in self.upper_idx))
        object.__setattr__(self, "mouth_idx", tuple(int(i) for i in self.mouth_idx))
        object.__setattr__(self, "brow_idx", tuple(int(i) for i in self.brow_idx))
        check_partition(self)

    @classmethod
    def default(cls):
        """The versioned ARKit split: eye* and brow* coefficients form the upper face"""
        upper = [i for i, name in enumerate(BLENDSHAPE_NAMES) if name.startswith(UPPER_FACE_PREFIXES)]
        mouth = [i for i, name in enumerate(BLENDSHAPE_NAMES) if not name.startswith(UPPER_FACE_PREFIXES)]
        brow = [BLENDSHAPE_NAMES.index(name) for name in BROW_NAMES]
        return cls(tuple(upper), tuple(mouth), tuple(sorted(brow)))

    def region_indices(self, region):
        """Column indices for a region name: upper, mouth, or full"""
        if region == "upper":
            return self.upper_idx
        if region == "mouth":
            return self.mouth_idx
        if region == "full":
            return tuple(range(self.num_coefficients))
        raise InvalidPartitionError(f"Unknown face region {region!r}")


def check_partition(part):
    """Raise InvalidPartitionError unless part is a sorted, disjoint cover of 0..C-1"""
    upper, mouth, brow = list(part.upper_idx), list(part.mouth_idx), list(part.brow_idx)
    every = upper + mouth
    if any(i < 0 or i >= part.num_coefficients for i in every + brow):
        raise InvalidPartitionError(
            f"Partition indices must lie in [0, {part.num_coefficients - 1}]"
        )
    if upper != sorted(upper) or mouth != sorted(mouth):
        raise InvalidPartitionError("Partition index lists must be sorted ascending")
    if set(upper) & set(mouth):
        raise InvalidPartitionError(
            f"Upper and mouth regions overlap at {sorted(set(upper) & set(mouth))}"
        )
    if len(every) != part.num_coefficients or set(every) != set(range(part.num_coefficients)):
        raise InvalidPartitionError(
            f"Upper ({len(upper)}) and mouth ({len(mouth)}) regions must cover all "
            f"{part.num_coefficients} coefficients exactly once"
        )
    if not set(brow) <= set(upper):
        raise InvalidPartitionError("Eyebrow indices must be a subset of the upper region")


def _frames_of(seq):
    return seq.frames if isinstance(seq, BlendshapeSequence) else np.asarray(seq)


def partition_face(seq, part):
    """
    Split a sequence into its upper-face and mouth columns. Values are copied unchanged.

    :param seq: BlendshapeSequence or L×C array
    :param part: FacePartition
    :return: (L×|upper_idx| array, L×|mouth_idx| array)
    """
    frames = _frames_of(seq)
    if frames.ndim != 2 or frames.shape[1] != part.num_coefficients:
        raise InvalidPartitionError(
            f"Partition expects {part.num_coefficients} columns, got shape {frames.shape}"
        )
    return frames[:, list(part.upper_idx)].copy(), frames[:, list(part.mouth_idx)].copy()


def merge_regions(upper, mouth, part):
    """
    Inverse of partition_face: write each region's columns back into an L×C matrix.

    :return: L×C array with every column filled exactly once
    """
    upper, mouth = np.asarray(upper), np.asarray(mouth)
    if upper.ndim != 2 or mouth.ndim != 2:
        raise ShapeError(f"Regions must be 2-D, got {upper.shape} and {mouth.shape}")
    if upper.shape[0] != mouth.shape[0]:
        raise ShapeError(
            f"Upper and mouth regions must have the same length, got {upper.shape[0]} and {mouth.shape[0]}"
        )
    if upper.shape[1] != len(part.upper_idx) or mouth.shape[1] != len(part.mouth_idx):
        raise ShapeError(
            f"Region widths {upper.shape[1]}/{mouth.shape[1]} do not match the partition "
            f"{len(part.upper_idx)}/{len(part.mouth_idx)}"
        )
    frames = np.empty((upper.shape[0], part.num_coefficients), dtype=np.result_type(upper, mouth))
    frames[:, list(part.upper_idx)] = upper
    frames[:, list(part.mouth_idx)] = mouth
    return frames


@dataclass(frozen=True)
class Violation:
    """One failed invariant. frame/coefficient are set for value violations."""

    kind: str
    message: str
    frame: int = None
    coefficient: int = None


@dataclass
class ValidationResult:
    """Outcome of validate_sequence: ok when there are no violations"""

    violations: list = field(default_factory=list)

    @property
    def ok(self):  # pylint: disable=invalid-name
        """True when the sequence satisfies every invariant"""
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_sequence(seq, num_coefficients=NUM_BLENDSHAPES, value_range=None):
    """
    Collect every invariant violation of a sequence without modifying it.

    :param seq: BlendshapeSequence or L×C array
    :param num_coefficients: expected column count
    :param value_range: optional (low, high) bounds for stored coefficients
    :rtype: ValidationResult
    """
    result = ValidationResult()
    frames = _frames_of(seq)
    if frames.ndim != 2:
        result.violations.append(Violation("shape", f"Expected a 2-D matrix, got {frames.ndim} dimensions"))
        return result
    length, columns = frames.shape
    if columns != num_coefficients:
        result.violations.append(
            Violation("shape", f"Expected {num_coefficients} coefficients per frame, got {columns}")
        )
    if length < MIN_SEQUENCE_FRAMES:
        result.violations.append(
            Violation("length", f"Expected at least {MIN_SEQUENCE_FRAMES} frames, got {length}")
        )
    if isinstance(seq, BlendshapeSequence) and not seq.fps > 0:
        result.violations.append(Violation("fps", f"Frame rate must be positive, got {seq.fps}"))
    for frame, coefficient in np.argwhere(~np.isfinite(frames)):
        result.violations.append(
            Violation(
                "nonfinite",
                f"Non-finite value at frame {frame}, coefficient {coefficient}",
                int(frame),
                int(coefficient),
            )
        )
    if value_range is not None:
        low, high = value_range
        with np.errstate(invalid="ignore"):
            outside = np.argwhere(np.isfinite(frames) & ((frames < low) | (frames > high)))
        for frame, coefficient in outside:
            result.violations.append(
                Violation(
                    "range",
                    f"Value {frames[frame, coefficient]} outside [{low}, {high}] at frame {frame}, "
                    f"coefficient {coefficient}",
                    int(frame),
                    int(coefficient),
                )
            )
    return result


def require_valid(seq, num_coefficients=NUM_BLENDSHAPES, what="sequence"):
    """Raise SequenceValidationError listing every violation, or return seq"""
    result = validate_sequence(seq, num_coefficients=num_coefficients)
    if not result.ok:
        raise SequenceValidationError(
            f"Invalid {what}: " + "; ".join(v.message for v in result.violations[:5]),
            result.violations,
        )
    return seq
