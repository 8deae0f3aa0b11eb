"""Exception types raised across the package.

Every error is a ``ValueError`` subclass so callers that only care about
"bad input" can catch the builtin.
"""


class SimDistillError(ValueError):
    pass


class ZeroNormRow(SimDistillError):
    pass


class DimensionMismatch(SimDistillError):
    pass


class NonPositiveTemperature(SimDistillError):
    pass


class LengthMismatch(SimDistillError):
    pass


class InvalidCapacity(SimDistillError):
    pass


class UnnormalizedBatch(SimDistillError):
    pass


class EmptyQueue(SimDistillError):
    pass


class EmptyAnchors(SimDistillError):
    pass


class StaleCache(SimDistillError):
    pass


class InconsistentInputs(SimDistillError):
    pass


class BankSmallerThanBatch(SimDistillError):
    pass


class BatchTooSmall(SimDistillError):
    pass


class KTooLarge(SimDistillError):
    pass


class EmptyTrainSet(SimDistillError):
    pass


class InvalidSpec(SimDistillError):
    pass


class ConfigError(SimDistillError):
    """Configuration that is well-formed but violates a method constraint."""


class BadMagic(SimDistillError):
    pass


class TruncatedFile(SimDistillError):
    pass


class SizeMismatch(SimDistillError):
    pass
