"""Exception hierarchy shared by every module."""


class PersBEVError(Exception):
    """Base class for all errors raised by persbev."""


class DomainError(PersBEVError, ValueError):
    """An input lies outside the domain of a function (e.g. non-positive depth)."""


class ConfigError(PersBEVError, ValueError):
    """A configuration is invalid or internally inconsistent."""


class ShapeError(PersBEVError, ValueError):
    """Array shapes do not satisfy an operation's contract."""


class FormatError(PersBEVError, ValueError):
    """A serialized artifact (tensor fixture, report) is malformed."""
