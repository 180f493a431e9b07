"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: config problems -> 2, numeric-domain and
accuracy failures -> 3, I/O and file-format problems -> 1.
"""


class CrcvolError(Exception):
    """Base class for all package-specific errors."""


class NumericDomainError(CrcvolError):
    """A transform blew up (moment explosion, overflow) for the requested argument."""


class AccuracyError(CrcvolError):
    """An iterative scheme failed to reach its stated tolerance."""


class NoArbitrageBandError(CrcvolError):
    """Option price sits on or outside the static no-arbitrage band.

    ``bound`` identifies the violated side ("lower" or "upper").
    """

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound


class ConfigError(CrcvolError):
    """Invalid or inconsistent configuration."""


class TrainingDivergedError(CrcvolError):
    """Loss became non-finite; ``epoch`` is the first offending epoch index."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class FormatError(CrcvolError):
    """Persisted artifact is unreadable: bad magic, version, or checksum."""


class DataGenError(CrcvolError):
    """Dataset generation aborted (e.g. drop rate above the hard limit)."""
