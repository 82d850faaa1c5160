"""
Exceptions raised by the library. The CLI maps them to exit codes.
"""


class BlendshapeDiffusionError(Exception):
    """Base class for every error raised on purpose by this package"""

    exit_code = 1


class ConfigurationError(BlendshapeDiffusionError):
    """Invalid configuration values, incompatible checkpoints, or a broken training contract"""


class ValidationError(BlendshapeDiffusionError):
    """Input data does not satisfy an invariant"""


class SequenceValidationError(ValidationError):
    """A blendshape sequence or feature track failed validation"""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class InvalidPartitionError(ValidationError):
    """The face partition is not a partition of the coefficient indices"""


class ShapeError(ValidationError):
    """Array shapes do not agree"""


class LengthError(ValidationError):
    """A sequence is too short or longer than the model supports"""


class SequenceFormatError(BlendshapeDiffusionError):
    """A binary file has the wrong magic bytes, version, or size"""


class DataError(BlendshapeDiffusionError):
    """The dataset cannot support the requested operation"""


class MissingPairError(DataError):
    """Prediction and ground-truth directories do not pair up by id"""

    def __init__(self, message, missing_ids=None):
        super().__init__(message)
        self.missing_ids = sorted(missing_ids or [])


class NumericalAbortError(BlendshapeDiffusionError):
    """Training produced a non-finite loss"""

    exit_code = 2

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
