"""Exception hierarchy shared by every module."""


class GovernanceError(Exception):
    """Base class for all errors raised by changegate."""


class EmptyDatasetError(GovernanceError):
    pass


class SingleClassError(GovernanceError):
    """A metric needs both classes (or at least one positive) and did not get them."""


class DomainError(GovernanceError, ValueError):
    pass


class SchemaError(GovernanceError, ValueError):
    """Input shape or column layout does not match what the consumer expects."""


class ConfigError(GovernanceError, ValueError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ConflictError(GovernanceError):
    pass


class ContaminationError(GovernanceError):
    """Golden-set patients leaked into training/drifting data, or evaluation sets collided."""


class IntegrityError(GovernanceError):
    """Audit chain is broken, reordered or tampered with."""

    def __init__(self, message: str, line_number: int | None = None) -> None:
        self.line_number = line_number
        self.message = message
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
