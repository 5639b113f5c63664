"""
Exception hierarchy for the signal engine
"""

from typing import Iterable, List


class SignalEngineError(Exception):
    """Base class for every error raised by the engine."""


class ConfigError(SignalEngineError):
    """A configuration, queue or scenario file could not be used."""


class ConfigParseError(ConfigError):
    """The file is missing or is not well-formed JSON."""


class ConfigValidationError(ConfigError):
    """The document parsed but violates one or more invariants."""

    def __init__(self, source: str, problems: Iterable[str]):
        self.source = source
        self.problems: List[str] = list(problems)
        super().__init__(f"{source}: " + "; ".join(self.problems))


class DimensionMismatchError(SignalEngineError, ValueError):
    """Per-link data does not match the number of links of the intersection."""


class InvalidPlanError(SignalEngineError):
    """A signal plan failed validate_plan."""

    def __init__(self, violations: Iterable[str]):
        self.violations: List[str] = list(violations)
        super().__init__("invalid signal plan: " + "; ".join(self.violations))


class EmptyFrontError(SignalEngineError, ValueError):
    """Operating-point selection was asked to choose from nothing."""


class SourceError(SignalEngineError):
    """A frame source failed while producing frames."""


class DetectorError(SignalEngineError):
    """A detector adapter failed on a frame."""


class AggregationTimeoutError(SignalEngineError):
    """No camera reported within the aggregation timeout."""


class PipelineStalledError(SignalEngineError):
    """Every frame source has stopped and no plan can be produced."""


class SimulationError(SignalEngineError):
    """The simulator could not run the requested scenario."""
