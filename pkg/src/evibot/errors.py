"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError -> 2, DataError (and subclasses) -> 3,
every other EvibotError -> 4.
"""


class EvibotError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EvibotError):
    """Invalid configuration value, unknown config key, or bad hyperparameter."""


class DataError(EvibotError):
    """Problem with input data files or their contents."""


class IntegrityError(DataError):
    """Structurally inconsistent graph data (dangling edges, duplicate ids)."""


class ValidationError(DataError):
    """A record or value violates its documented contract."""


class DegenerateDataError(DataError):
    """Data that is formally valid but unusable (e.g. single-class train split)."""


class ContractError(EvibotError):
    """A caller violated a function's precondition."""


class ShapeError(ContractError):
    """Mismatched tensor shapes; the message names both shapes."""


class NumericError(EvibotError):
    """Numerical failure: non-finite values or an empty/invalid domain."""


class DomainError(NumericError):
    """Input outside the mathematical domain of an operation."""


class StageError(EvibotError):
    """A pipeline stage failed; carries the stage name, chains the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage


def exit_code_for(exc: Exception) -> int:
    """Map an exception (following its cause chain) to a CLI exit code."""
    seen = set()
    cur: BaseException | None = exc
    while cur is not None and id(cur) not in seen:
        seen.add(id(cur))
        if isinstance(cur, ConfigError):
            return 2
        if isinstance(cur, DataError):
            return 3
        cur = cur.__cause__
    return 4 if isinstance(exc, EvibotError) else 1
