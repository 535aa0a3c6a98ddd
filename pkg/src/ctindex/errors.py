"""Common exception base for the ctindex package."""


class CtIndexError(Exception):
    """Base class for all errors raised by this package.

    Every typed error carries a short machine-readable ``code`` used by the
    HTTP layer and the CLI when reporting failures.
    """

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
