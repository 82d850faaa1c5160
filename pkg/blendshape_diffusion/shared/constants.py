"""
Just a common storage space for storing some constants.
"""
from os.path import abspath, dirname, join

# Bundled data
DATA_DIRECTORY = join(abspath(dirname(__file__)), "data")
PROFILES_DIRECTORY = join(DATA_DIRECTORY, "profiles")
TEMPLATES_DIRECTORY = join(DATA_DIRECTORY, "templates")
PROFILE_NAMES = ("tiny", "paper")

# Environment
THREADS_ENVIRONMENT_VARIABLE = "EMODIFF_THREADS"

# Blendshape layout, version 1: ARKit names in alphabetical order, tongueOut excluded.
BLENDSHAPE_LAYOUT_VERSION = 1
BLENDSHAPE_NAMES = (
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "eyeLookDownLeft",
    "eyeLookDownRight",
    "eyeLookInLeft",
    "eyeLookInRight",
    "eyeLookOutLeft",
    "eyeLookOutRight",
    "eyeLookUpLeft",
    "eyeLookUpRight",
    "eyeSquintLeft",
    "eyeSquintRight",
    "eyeWideLeft",
    "eyeWideRight",
    "jawForward",
    "jawLeft",
    "jawOpen",
    "jawRight",
    "mouthClose",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthFunnel",
    "mouthLeft",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthPucker",
    "mouthRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "noseSneerLeft",
    "noseSneerRight",
)
NUM_BLENDSHAPES = 51
UPPER_FACE_PREFIXES = ("brow", "eye")
BROW_NAMES = (
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
)

# Emotion categories, stored by index in this order
EMOTION_NAMES = (
    "neutral",
    "angry",
    "doubtful",
    "surprised",
    "happy",
    "sad",
    "scared",
    "serious",
    "proud",
)

# Synthetic audio features: 8 articulation envelopes followed by 8 emotion channels
ARTICULATION_CHANNELS = 8
EMOTION_CHANNELS = 8
AUDIO_FEATURE_CHANNELS = ARTICULATION_CHANNELS + EMOTION_CHANNELS
EMOTION_CHANNEL_NOISE = 0.1

# Sequences
DEFAULT_FPS = 25
DEFAULT_SEQUENCE_FRAMES = 100
MIN_SEQUENCE_FRAMES = 2
SPLIT_NAMES = ("train", "val", "test")

# File formats (little-endian)
FILE_FORMAT_VERSION = 1
SEQUENCE_MAGIC = b"EDBS"
AUDIO_MAGIC = b"EDAF"
CHECKPOINT_MAGIC = b"EDCK"
CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1
SEQUENCE_SUFFIX = ".edbs"
AUDIO_SUFFIX = ".edaf"
MANIFEST_FILE_NAME = "manifest.tsv"

# Audio embedding: 4 statistics per channel projected by a frozen random matrix
AUDIO_EMBEDDING_WIDTH = 256
AUDIO_PROJECTION_SEED = 20240101

# Reporting scales, applied only when presenting numbers
FBE_SCALE = 1e2
EBE_SCALE = 1e2
FDD_SCALE = 1e4
