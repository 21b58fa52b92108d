"""Exception hierarchy shared by all modules.

CLI exit codes: ConfigError -> 1, DataError/IntegrityError -> 2,
NumericError/DeterminismError -> 3.
"""


class SpeechAlignError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SpeechAlignError):
    """Invalid configuration: unknown key, bad value, incompatible settings."""


class ShapeError(SpeechAlignError):
    """Tensor shapes incompatible with the requested operation."""


class NumericError(SpeechAlignError):
    """Non-finite value where a finite one is required."""


class DeterminismError(SpeechAlignError):
    """Two evaluations that must agree did not."""


class DataError(SpeechAlignError):
    """Bad input data: manifest, audio, labels, spans."""


class IntegrityError(SpeechAlignError):
    """Corrupt or incompatible on-disk artifact (checkpoint, feature file)."""


class ContractError(SpeechAlignError):
    """A caller violated an operation's precondition."""
