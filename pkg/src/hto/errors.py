class HTOError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class ConfigError(HTOError, ValueError):
    pass


class ShapeError(HTOError, ValueError):
    pass


class ParseError(HTOError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class CapacityError(HTOError, ValueError):
    def __init__(self, message, cycle=None):
        if cycle is not None:
            message = f"cycle {cycle}: {message}"
        super().__init__(message)
        self.cycle = cycle
