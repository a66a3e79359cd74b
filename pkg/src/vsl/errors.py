"""Exception hierarchy shared by all engine subsystems."""

from __future__ import annotations


class VslError(Exception):
    """Base class for every error raised by this package."""


# --- scenario / world ------------------------------------------------------

class ParseError(VslError):
    """Scenario file is malformed; carries the offending field when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ValidationError(VslError):
    """Scenario parsed but violates a world invariant (e.g. overlap)."""


class NoObjectAtPick(VslError):
    pass


class AmbiguousPick(VslError):
    pass


# --- perception ------------------------------------------------------------

class FrameOutOfBounds(VslError):
    pass


class NoChangeDetected(VslError):
    pass


class MultiObjectChange(VslError):
    """More than two stable difference blobs: several objects moved at once."""


class PatchTooSmall(VslError):
    pass


class InsufficientMatches(VslError):
    pass


class NoConsensus(VslError):
    pass


class DegenerateTransform(VslError):
    pass


class ReflectionDetected(VslError):
    pass


class NoMatch(VslError):
    pass


class Ambiguous(VslError):
    """Two or more match candidates scored within the ambiguity margin."""

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or []


# --- skill recording / reproduction ----------------------------------------

class UnknownAction(VslError):
    pass


class AmbiguousAction(VslError):
    pass


class MatchFailed(VslError):
    def __init__(self, op_index, message=""):
        super().__init__(f"op {op_index}: {message}" if message else f"op {op_index}")
        self.op_index = op_index


# --- motion ----------------------------------------------------------------

class InvalidShape(VslError):
    pass


class NonPositiveDuration(VslError):
    pass


class DegenerateDemo(VslError):
    pass


# --- symbolic --------------------------------------------------------------

class NoEffectObserved(VslError):
    pass


class InconsistentDemos(VslError):
    pass


class NoPlan(VslError):
    pass


class UnknownPrimitive(VslError):
    pass


# --- 3D --------------------------------------------------------------------

class NoConvergence(VslError):
    pass
