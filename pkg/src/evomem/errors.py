"""Exception hierarchy shared by every memory module."""

from __future__ import annotations


class EvomemError(Exception):
    """Base class for all errors raised by this package."""


# core model


class InvalidAction(EvomemError, ValueError):
    """An action record violates its construction rules."""


class InvalidVerb(InvalidAction):
    pass


class NegativeReward(EvomemError, ValueError):
    pass


class FailureWithReward(EvomemError, ValueError):
    pass


class MultipleHeldObjects(EvomemError, ValueError):
    pass


class InvalidRecord(EvomemError, ValueError):
    """A step or episode record is structurally inconsistent."""


# episodic memory


class UnknownStateNode(EvomemError, LookupError):
    pass


class EmptyEpisode(EvomemError, ValueError):
    pass


class MalformedFact(EvomemError, ValueError):
    pass


# semantic memory


class ZeroUsage(EvomemError, ValueError):
    pass


class UnknownGuideline(EvomemError, LookupError):
    pass


# evolution engine


class NoOpenEpisode(EvomemError, RuntimeError):
    pass


class SummarizerFailure(EvomemError, RuntimeError):
    pass


class EnvironmentUnavailable(EvomemError, RuntimeError):
    pass


class EndpointError(EvomemError, RuntimeError):
    pass


class SchemaViolation(EvomemError, ValueError):
    pass


# persistence


class SnapshotError(EvomemError):
    pass


class IoFailure(SnapshotError, OSError):
    pass


class DigestMismatch(SnapshotError, ValueError):
    pass


class VersionUnsupported(SnapshotError, ValueError):
    pass


class InvariantViolation(SnapshotError, ValueError):
    pass


class UsageError(EvomemError):
    pass
