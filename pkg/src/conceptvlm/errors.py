"""Exception types shared across the package."""


class ConceptVLMError(Exception):
    """Base class for all package-specific errors."""


class InputError(ConceptVLMError, ValueError):
    """Caller supplied arguments that violate an operation's contract."""


class DimensionError(InputError):
    """Array or image dimensions are incompatible."""


class EmptySelectionError(InputError):
    """A mask or filter selected nothing usable."""


class DegenerateInputError(InputError):
    """Numerically degenerate input (zero vector, empty collection)."""


class CapacityError(ConceptVLMError, ValueError):
    """A sequence exceeds the model's context length."""


class UndefinedMetricError(ConceptVLMError, ValueError):
    """A metric is undefined for the given inputs (e.g. no negatives)."""


class ValidationError(ConceptVLMError, ValueError):
    """On-disk data or configuration failed schema/consistency checks."""


class TrainingError(ConceptVLMError, RuntimeError):
    """Training aborted (e.g. non-finite loss)."""
