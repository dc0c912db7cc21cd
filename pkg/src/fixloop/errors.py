"""Exception hierarchy shared across fixloop modules."""


class FixloopError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FixloopError):
    """Fatal configuration problem: missing checker binary, bad profile,
    unusable endpoint, unreadable dataset, and the like.  The CLI maps
    this to exit code 3."""


class EditError(FixloopError):
    """A single line-range edit could not be performed (bad bounds,
    unknown file, embedded newline in a replacement line)."""


class PatchError(FixloopError):
    """A patch plan failed between validation and application; the
    workspace has been restored to its pre-apply state."""


class BackendError(FixloopError):
    """The completion backend failed after exhausting its retries."""


class ReplayError(BackendError):
    """Replay store problem: missing slot, missing completion file, or a
    prompt digest mismatch (fixture drift)."""
