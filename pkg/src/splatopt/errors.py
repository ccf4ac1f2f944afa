"""Exception types shared across the package.

Two broad categories matter to the CLI: input/config problems (exit code 2)
and backend/auth problems (exit code 3). Everything else is a plain bug.
"""

from __future__ import annotations


class SplatoptError(Exception):
    """Base class for all package errors."""


class InputError(SplatoptError):
    """Bad user input: files, config values, malformed fixtures."""


class BackendError(SplatoptError):
    """Remote or mock backend failed to produce a usable response."""


# --- program model ---------------------------------------------------------

class UnbalancedMarkers(InputError):
    """EVOLVE-BLOCK markers are nested, unclosed, or out of order."""


class UnknownBlockIndex(InputError):
    """A modification references a block index the program does not have."""


class NoEvolveBlocks(InputError):
    """The operation needs at least one EVOLVE-BLOCK region."""


# --- oracle ----------------------------------------------------------------

class SceneFormatError(InputError):
    """Scene JSON is missing fields or violates a value constraint."""


class InvalidRange(InputError):
    """A generation parameter range is empty or out of bounds."""


class DegenerateWorkload(InputError):
    """Every tile is empty; workload statistics are undefined."""


# --- profile ingest --------------------------------------------------------

class MalformedRow(InputError):
    """A metrics/stats CSV row cannot be parsed or fails validation."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingMetric(InputError):
    """A required metric key is absent from the CSV."""


class EmptyStalls(InputError):
    """No stall rows to rank."""


# --- planner ---------------------------------------------------------------

class EmptyPlan(InputError):
    """The response contained no recognizable advice items."""


class NoIdsRecognized(InputError):
    """The prune response never referenced any advice id."""


# --- gateway ---------------------------------------------------------------

class AuthMissing(BackendError):
    """The configured API key environment variable is unset or empty."""


class RemoteError(BackendError):
    """The remote endpoint answered with an unusable status or body."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RequestTimedOut(BackendError):
    """A single remote request exceeded the configured timeout."""


class BackendExhausted(BackendError):
    """All retry attempts failed."""


# --- evaluator -------------------------------------------------------------

class UnknownTag(InputError):
    """A candidate carries a transform tag the catalog does not define."""


class ToolchainError(SplatoptError):
    """Base for subprocess-backend stage failures."""

    stage = "unknown"

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class CompileFailed(ToolchainError):
    stage = "compile"


class RunFailed(ToolchainError):
    stage = "run"


class MeasureParseError(ToolchainError):
    stage = "measure"


class CommandTimedOut(ToolchainError):
    stage = "timeout"


# --- checker ---------------------------------------------------------------

class UnparseableVerdict(BackendError):
    """The checker response contained no recognizable verdict line."""


# --- config / cli ----------------------------------------------------------

class ConfigError(InputError):
    """Run config is structurally invalid or references missing files."""
