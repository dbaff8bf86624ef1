"""Exception hierarchy for the detection pipeline.

Three families map onto the CLI exit codes: configuration problems (exit 1),
data problems (exit 2), and training divergence (exit 3).
"""


class GridTheftError(Exception):
    """Base class for all library errors."""


class ConfigError(GridTheftError):
    """Invalid configuration or invalid request (CLI exit code 1)."""


class DataError(GridTheftError):
    """Malformed or contract-violating data (CLI exit code 2)."""


class TrainingError(GridTheftError):
    """Training failed to make progress or produced non-finite values (exit 3)."""


# --- configuration ---------------------------------------------------------

class FractionOutOfRange(ConfigError):
    pass


class RateOutOfRange(ConfigError):
    pass


class UnknownKind(ConfigError):
    pass


class ZeroWindow(ConfigError):
    pass


class WeightSumViolation(ConfigError):
    pass


# --- data ------------------------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"required column not in header: {name!r}")
        self.name = name


class NonNumericCell(DataError):
    def __init__(self, row, col, value=None):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col


class EmptyFile(DataError):
    pass


class StateTooSmall(DataError):
    def __init__(self, state_id, count=None):
        super().__init__(f"state {state_id!r} has too few records ({count})")
        self.state_id = state_id


class EmptySeries(DataError):
    pass


class UnfittedCoefficients(DataError):
    pass


class NegativeLoad(DataError):
    pass


class NameMismatch(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class RowCountMismatch(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class DegenerateRange(DataError):
    pass


class EmptyMask(DataError):
    pass


class SingleClassTrainSet(DataError):
    pass


class SingleClassData(DataError):
    pass


class EmptyData(DataError):
    pass


class UntrainedForest(DataError):
    pass


class SingleClassLabels(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NonBinaryValue(DataError):
    pass


class IoFailure(DataError):
    pass


# --- training --------------------------------------------------------------

class DivergedLoss(TrainingError):
    pass


class NonFiniteActivation(TrainingError):
    pass
