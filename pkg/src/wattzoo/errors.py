"""Exception hierarchy.

Two roots matter to callers: :class:`InputError` covers anything the user can
fix by supplying different data or flags (the CLI maps it to exit code 2),
while :class:`FitError` covers numerical failures during fitting (exit code 1).
"""


class WattzooError(Exception):
    """Base class for every error raised by this package."""


class InputError(WattzooError, ValueError):
    """Invalid data, schema or arguments."""


class FitError(WattzooError, RuntimeError):
    """A solver or fitting routine could not produce a usable model."""


# trace and schema problems
class MalformedHeader(InputError):
    pass


class NonNumericCell(InputError):
    def __init__(self, row, col, value=None):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")


class NonMonotoneTimestamp(InputError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"timestamp at row {row} does not increase")


class SchemaMismatch(InputError):
    pass


class LengthMismatch(InputError):
    pass


class EmptyInput(InputError):
    pass


class EmptyOverlap(InputError):
    pass


class TooFewSamples(InputError):
    pass


class MissingPower(InputError):
    pass


class MissingRegion(InputError):
    pass


class UnresolvedInput(InputError):
    pass


class InvalidProfile(InputError):
    pass


# model-level argument problems
class OutOfRangeUtilization(InputError):
    pass


class OutOfRangeThroughput(InputError):
    pass


class MissingThroughputMax(InputError):
    pass


class MissingProfile(InputError):
    pass


class InsufficientBuckets(InputError):
    pass


class EmptyTrainingSet(InputError):
    pass


class NoPositiveUtilizationSamples(InputError):
    pass


class Underdetermined(InputError):
    pass


class UnknownModelKind(InputError):
    pass


class EmptyReport(InputError):
    pass


class ConfigError(InputError):
    pass


class ModelFormatError(InputError):
    pass


# numerical failures
class RankDeficient(FitError):
    pass


# the regression layer reports rank problems under this name
SingularDesign = RankDeficient


class SolverNotConverged(FitError):
    pass


class DegenerateComponent(FitError):
    pass


class NonFiniteLoss(FitError):
    pass


class MaxIterationsExceeded(UserWarning):
    """Warning category: an iterative solver hit its iteration cap."""
