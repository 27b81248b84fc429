class ExtractError(Exception):
    """Base class for extraction failures."""


class BadJob(ExtractError):
    """The job manifest is malformed or violates its invariants."""


class ModelUnavailable(ExtractError):
    """The named encoder cannot be loaded in this environment."""
