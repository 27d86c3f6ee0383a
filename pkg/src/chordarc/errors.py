"""Exception hierarchy shared across the package."""


class ChordArcError(Exception):
    """Base class for all errors raised by :mod:`chordarc`."""


class MalformedCurveError(ChordArcError, ValueError):
    pass


class WindowInsufficientError(ChordArcError):
    """The nearest sample sits on the window edge and the curve keeps approaching."""


class InjectivityError(ChordArcError):
    pass


class DomainError(ChordArcError, ValueError):
    """A point lies outside the open domain an operation is defined on."""


class InversionError(ChordArcError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class UnsupportedDomainError(ChordArcError):
    """The domain lacks a map (usually the exterior one) the operation needs."""


class MonotonicityError(ChordArcError):
    pass


class SingularityError(ChordArcError):
    pass


class TruncationError(ChordArcError):
    pass


class DivergenceError(ChordArcError):
    pass


class ConfigError(ChordArcError):
    """Configuration failed validation; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))
