"""Exception types shared across the package."""


class GoalDialError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(GoalDialError):
    """A corpus or graph file failed to parse; message carries the locus."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        locus = ""
        if path is not None:
            locus = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(locus + message)
        self.path = path
        self.line = line


class UnknownEntityError(GoalDialError):
    """An entity id was queried that is not in the knowledge graph."""


class SequenceExhaustedError(GoalDialError):
    """advance_goal called on a goal sequence whose cursor is at the end."""


class OutcomeConflictError(GoalDialError):
    """The same entity was both accepted and rejected in one outcome batch."""


class InsufficientDistractorsError(GoalDialError):
    """Fewer than the required distinct distractor responses are available."""


class SplitError(GoalDialError):
    """A requested corpus split cannot be populated."""


class ConfigError(GoalDialError):
    """A model or generation config is degenerate or inconsistent."""


class SequenceTooLongError(GoalDialError):
    """An encoder input exceeds the configured maximum length."""


class MissingGoalError(GoalDialError):
    """A planner operation needs a previous goal but none exists yet."""


class NoCandidateTopicsError(GoalDialError):
    """Topic candidate construction produced nothing, even after fallback."""


class PosteriorUnavailableError(GoalDialError):
    """The response-conditioned knowledge distribution was requested outside
    training; at inference only the prior path exists."""


class ClosedSessionError(GoalDialError):
    """A message was sent to a session that has already ended."""
