class ChordArcError(Exception):
    """Base class for all library errors."""


class PreconditionError(ChordArcError, ValueError):
    """An operation was called outside its stated preconditions."""


class SpecError(PreconditionError):
    pass


class ResolutionError(PreconditionError):
    """Sampling resolution too coarse for the requested scales."""


class ScaleRangeError(PreconditionError):
    pass


class EmptyRegionError(PreconditionError):
    pass


class DegenerateFitError(ChordArcError):
    def __init__(self, rank, needed):
        super().__init__(f"degenerate point set: rank {rank} < {needed}")
        self.rank = rank


class InsufficientDataError(ChordArcError):
    pass


class CloudParseError(ChordArcError):
    def __init__(self, msg, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + msg)
        self.line = line


class DimensionMismatchError(CloudParseError):
    pass


class FlatnessViolation(ChordArcError):
    """Both probe points landed inside the domain.

    In a uniform domain this can only happen when the flatness threshold
    was chosen too large for the accessibility constants.
    """


class OracleInconsistency(ChordArcError):
    pass


class GoodCurveFailure(ChordArcError):
    def __init__(self, stage, detail=""):
        super().__init__(f"good curve failed at {stage}" + (f": {detail}" if detail else ""))
        self.stage = stage
