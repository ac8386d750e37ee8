class HarnessError(Exception):
    """Base class for harness errors."""


class MissingDependencyError(HarnessError):
    """A required library or external artifact is unavailable; the
    message carries a remediation hint."""
