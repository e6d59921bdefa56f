"""Exception types shared across the package, with their CLI exit codes."""


class EngineError(Exception):
    """Base class for every error this package raises deliberately."""

    exit_code = 1


class ConfigError(EngineError):
    """Bad or inconsistent run configuration (missing file, invalid flag value)."""

    exit_code = 2


class FormatError(EngineError):
    """Persisted artifact is malformed: wrong magic, version, or content."""

    exit_code = 3


class DimensionMismatchError(EngineError):
    """Embedding dimensionalities disagree between two inputs."""

    exit_code = 4


class ZeroVectorError(EngineError):
    """Vector with (near-)zero L2 norm; signals a corrupt embedding row."""

    exit_code = 3


class EmptyInputError(EngineError, ValueError):
    """An operation that requires at least one element received none."""

    exit_code = 2


class NonPositiveTauError(EngineError, ValueError):
    """Softmax temperature must be strictly positive."""

    exit_code = 2


class EmptyTableError(EngineError, ValueError):
    """An embedding table that must be non-empty is empty."""

    exit_code = 2


class NotEnoughCandidatesError(EngineError, ValueError):
    """Single-side mining asked for more labels than the candidate pool holds."""

    exit_code = 2


class InvalidCountsError(EngineError, ValueError):
    """Histogram counts violate the every-bin-at-least-one contract."""

    exit_code = 3


class InvalidSpecError(EngineError, ValueError):
    """Synthetic data spec fails validation."""

    exit_code = 2
