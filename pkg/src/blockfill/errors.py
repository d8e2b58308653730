"""Exception hierarchy.

Data problems raise subclasses of :class:`DataError`; contract misuse
(bad arguments, mismatched shapes) raises subclasses of
:class:`ContractError`. The CLI maps DataError to exit code 2.
"""


class BlockfillError(Exception):
    """Base class for package errors."""


class DataError(BlockfillError):
    """Input data cannot be used (parse/schema/validation failures)."""


class ContractError(BlockfillError):
    """An operation was called outside its contract."""


class DegenerateAreaError(ContractError):
    """Site area is zero, negative or non-finite."""


class ConstantFeatureError(ContractError):
    """A feature has zero variance where spread is required."""


class TooFewPointsError(ContractError):
    """Not enough points for the requested number of clusters."""


class TooFewObservedError(DataError):
    """Too few blocks with observed targets to fit a model."""


class TooFewSamplesError(ContractError):
    """Classifier training set is too small for the class count."""


class MissingClassError(ContractError):
    """A class label in [0, K) has no training examples."""


class DimensionMismatchError(ContractError):
    """Feature vector has the wrong dimension."""


class KMismatchError(ContractError):
    """Probability vector length disagrees with the cluster count."""


class EmptyIndexError(DataError):
    """No observed blocks to build a spatial index from."""


class RankTooLargeError(ContractError):
    """Factorization rank must be below min(n_rows, n_cols)."""


class NonNegativeViolationError(ContractError):
    """Negative entries in data that must be non-negative."""


class LengthMismatchError(ContractError):
    """Paired sequences have different lengths."""


class EmptyInputError(ContractError):
    """An operation received an empty sequence."""


class ZeroVarianceError(ContractError):
    """A statistic is undefined because the values have no variance."""


class DegenerateGroupsError(ContractError):
    """ANOVA groups do not satisfy the minimum size/count requirements."""


class RateTooHighError(ContractError):
    """Masking rate would hide all (or more than allowed) blocks."""


class KeyMismatchError(ContractError):
    """Two prediction maps do not cover the same block ids."""


class ParseError(DataError):
    """Input file could not be parsed; message carries the locus."""


class SchemaError(DataError):
    """Input file misses required columns/properties."""


class ConfigError(DataError):
    """Configuration file or flags are invalid."""
