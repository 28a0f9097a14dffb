"""Exception hierarchy. Every error carries enough context to be reported by the CLI."""

from __future__ import annotations


class LandUsePricingError(Exception):
    """Base class for all package errors."""


class ParseError(LandUsePricingError):
    """Malformed network or scenario file."""


class ValidationError(LandUsePricingError, ValueError):
    """Input parses but violates a model invariant."""


class DimensionMismatch(ValidationError):
    pass


class NegativeFlow(ValidationError):
    pass


class InfeasibleState(ValidationError):
    pass


class RouteLimitExceeded(LandUsePricingError):
    def __init__(self, od: tuple[str, str], limit: int):
        super().__init__(f"OD pair {od[0]}->{od[1]} has more than {limit} simple routes")
        self.od = od
        self.limit = limit


class Unreachable(ValidationError):
    def __init__(self, od: tuple[str, str]):
        super().__init__(f"destination {od[1]} is unreachable from origin {od[0]}")
        self.od = od


class NotConverged(LandUsePricingError):
    """Fixed-point iteration hit its iteration budget.

    ``trace`` holds the residual after every iteration so the caller can see
    whether it stalled or was still making progress.
    """

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])


class OscillationDetected(NotConverged):
    pass


class NoKKTPoint(LandUsePricingError):
    pass


class MultipleSolutionsReported(LandUsePricingError):
    def __init__(self, message: str, candidates: list):
        super().__init__(message)
        self.candidates = candidates


class InstanceTooLarge(LandUsePricingError):
    pass
