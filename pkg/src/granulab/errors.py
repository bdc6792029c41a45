"""Exception hierarchy shared across the toolkit.

Data problems (bad metadata, unknown ids) and usage problems (bad config)
are distinct classes so the CLI can map them to distinct exit codes.
"""


class GranulabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GranulabError):
    """Invalid configuration value or combination."""


class DataError(GranulabError):
    """Input data violates a documented contract."""


class EmptyInput(DataError):
    pass


class NonPositiveSize(DataError):
    pass


class MalformedDocument(DataError):
    pass


class MissingField(DataError):
    def __init__(self, name: str):
        super().__init__(f"missing field: {name}")
        self.name = name


class TypeMismatch(DataError):
    def __init__(self, field: str, expected: str, got: object):
        super().__init__(f"field {field!r}: expected {expected}, got {type(got).__name__}")
        self.field = field


class DegenerateTruncation(ConfigError):
    """Truncation window [a, b] carries essentially no normal mass."""


class TableTooSmall(ConfigError):
    """Table cannot hold a particle of the requested maximum size."""


class InvalidSpec(DataError):
    """Scene specification violates the simulator preconditions."""


class ViewportTooSmall(ConfigError):
    """Render viewport does not cover the table."""


class NoParticles(DataError):
    """Segmentation found no foreground to measure."""


class LengthMismatch(DataError):
    pass


class EmptyImageSet(DataError):
    pass


class UnknownImageId(DataError):
    def __init__(self, ids):
        ids = sorted(ids)
        super().__init__(f"prediction ids not present in manifest: {', '.join(map(str, ids))}")
        self.ids = ids


class MalformedPredictions(DataError):
    pass


class IoFailure(GranulabError):
    """Filesystem write/read failed."""
