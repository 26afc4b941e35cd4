"""Exception hierarchy shared across the package.

Four base classes partition failures by origin so the command-line layer
can map them onto distinct exit codes:

    ConfigError   -> 2   bad configuration / arguments
    DataError     -> 3   malformed or inconsistent input data
    ServiceError  -> 4   external scoring service failures
    InternalError -> 5   broken internal invariants (bugs, not user input)
"""

from __future__ import annotations


class MvmlfsError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class ConfigError(MvmlfsError):
    exit_code = 2


class DataError(MvmlfsError):
    exit_code = 3


class ServiceError(MvmlfsError):
    exit_code = 4


class InternalError(MvmlfsError):
    exit_code = 5


# --- dataset ---

class MissingFile(DataError):
    pass


class RowCountMismatch(DataError):
    pass


class NonBinaryLabel(DataError):
    pass


class ParseError(DataError):
    pass


class DegenerateSplit(DataError):
    pass


# --- stats ---

class LengthMismatch(DataError):
    pass


# --- semantic ---

class BatchTooLarge(ConfigError):
    pass


class TransportError(ServiceError):
    pass


class MalformedResponse(ServiceError):
    pass


class MissingPairInResponse(ServiceError):
    pass


# --- graph ---

class NodeSetMismatch(InternalError):
    pass


# --- gat ---

class ShapeMismatch(InternalError):
    pass


class NonFiniteLoss(InternalError):
    pass


class NoSupervisionEdges(DataError):
    pass


class GradCheckFailure(InternalError):
    pass


# --- selection / evaluation ---

class KTooLarge(ConfigError):
    pass


class TooFewSamples(DataError):
    pass


class NoPositives(DataError):
    pass


class MissingRun(ConfigError):
    pass
