"""Typed errors raised by the tensor-network and estimation layers."""


class ShadowMpoError(ValueError):
    """Base class for all package-specific errors."""


class CapacityError(ShadowMpoError):
    """A size guard was exceeded (dense conversion, window width, bond cap)."""


class NotTranslationInvariantError(ShadowMpoError):
    """Transfer-operator analysis requested on a non-uniform chain."""


class DegenerateFactorizationError(ShadowMpoError):
    """A factorized overlap hit a non-positive denominator window."""


class DegenerateEstimateError(ShadowMpoError):
    """A statistical estimate produced a non-positive factor."""


class NormalizationError(ShadowMpoError):
    """An operator lost its trace (near-zero or non-finite normalization)."""


class ConditioningError(ShadowMpoError):
    """A local linear system was rank deficient beyond the ridge rescue."""


class SamplingError(ShadowMpoError):
    """Bitstring sampling encountered probabilities outside tolerance."""


class DatasetFormatError(ShadowMpoError):
    """A measurement dataset file violates the line-delimited JSON format."""
