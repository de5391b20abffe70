"""Exception hierarchy. Each family maps onto a CLI exit code."""


class CSLRError(Exception):
    exit_code = 1


class ConfigError(CSLRError):
    exit_code = 2


class SpecError(ConfigError):
    """Synthetic corpus spec violates its invariants."""


class DataError(CSLRError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, record_index=None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class VocabularyError(DataError):
    pass


class ImputationError(DataError):
    def __init__(self, landmark):
        super().__init__(f"landmark {landmark} is invalid in every frame")
        self.landmark = landmark


class DegeneratePoseError(DataError):
    pass


class ContractViolation(DataError):
    pass


class InfeasibleAlignmentError(DataError):
    """Target cannot be aligned to the available number of frames."""


class UndefinedWERError(DataError):
    pass


class NumericError(CSLRError):
    exit_code = 4


class DivergenceError(NumericError):
    pass


class DimensionError(ValueError, CSLRError):
    exit_code = 3


class SequenceTooShortError(DimensionError):
    pass


class UninitializedStatsError(CSLRError, RuntimeError):
    exit_code = 4
