"""Exception hierarchy shared across the pipeline."""


class DnsflowError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ValidationError(DnsflowError):
    """Input data violates a structural contract (bad CSV, overlapping CDR, ...)."""


class PipelineError(DnsflowError):
    """A pipeline run aborted; ``cause`` holds the original exception."""

    def __init__(self, message: str, cause: BaseException | None = None):
        super().__init__(message)
        self.cause = cause
