"""Exception types shared across the simulator."""


class DccSimError(Exception):
    """Base class for all simulator errors."""


class TraceError(DccSimError):
    """Base class for time-series ingestion/synthesis errors."""


class ParseError(TraceError):
    """A trace file row could not be parsed."""


class NonUniformInterval(TraceError):
    """Trace timestamps are not uniformly spaced."""


class RangeViolation(TraceError):
    """A trace value lies outside the valid range for its kind."""


class EmptyTrace(TraceError):
    """A trace contains no data rows."""


class InvalidStep(TraceError):
    """Requested resampling step is not a divisor of 3600 seconds."""


class InvalidParams(TraceError):
    """Synthesis parameters are out of range."""


class DomainError(DccSimError):
    """An input violates a physical or numerical precondition."""


class ConfigError(DccSimError):
    """A scenario or cluster configuration is invalid."""


class TraceExhausted(DccSimError):
    """The simulation stepped past the end of a driving trace."""


class EpisodeFinished(DccSimError):
    """step() was called on an environment whose episode already ended."""


class SearchSpaceTooLarge(DccSimError):
    """Brute-force enumeration would exceed the node budget."""


class NumericalDivergence(DccSimError):
    """Training produced a non-finite loss; the run was aborted."""
