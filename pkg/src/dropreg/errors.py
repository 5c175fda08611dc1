"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Matrix shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An input value lies outside the operation's domain."""


class UsageError(RuntimeError):
    """An API was called with inconsistent or stale arguments."""


class ParseError(ValueError):
    """A file could not be parsed.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """An experiment configuration failed validation.

    ``problems`` lists every field-level message found, so a bad config is
    reported in full rather than one field at a time.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite risk.

    Carries the per-epoch records collected before the divergence so partial
    results can still be persisted.
    """

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records
