"""Exception hierarchy.

Every error carries a stable ``code`` so the CLI can report a
machine-readable error class on failure.
"""


class HevError(Exception):
    code = "HevError"


class ConfigError(HevError, ValueError):
    code = "ConfigError"


class PowerInfeasible(HevError, ValueError):
    """Battery power request above the circuit maximum U^2 / 4R."""

    code = "PowerInfeasible"


class SocOutOfBounds(HevError):
    code = "SocOutOfBounds"


class MapError(HevError, ValueError):
    code = "MapError"


class ParseError(HevError, ValueError):
    code = "ParseError"


class NonPositiveDuration(HevError, ValueError):
    code = "NonPositiveDuration"


class VelocityOutOfRange(HevError, ValueError):
    code = "VelocityOutOfRange"


class InvalidInitialSoc(HevError, ValueError):
    code = "InvalidInitialSoc"


class SteppedAfterDone(HevError, RuntimeError):
    code = "SteppedAfterDone"


class EpisodeNotFinished(HevError, RuntimeError):
    code = "EpisodeNotFinished"


class ShapeMismatch(HevError, ValueError):
    code = "ShapeMismatch"


class NonFiniteLoss(HevError, FloatingPointError):
    code = "NonFiniteLoss"


class BufferTooSmall(HevError, ValueError):
    code = "BufferTooSmall"


class AgentCountMismatch(HevError, ValueError):
    code = "AgentCountMismatch"


class GridTooLarge(HevError, ValueError):
    code = "GridTooLarge"


class DegenerateCovariance(HevError, ValueError):
    code = "DegenerateCovariance"


class IdenticalSettings(HevError, ValueError):
    code = "IdenticalSettings"


class ZeroInitialSoc(HevError, ValueError):
    code = "ZeroInitialSoc"


class ZeroBaseline(HevError, ValueError):
    code = "ZeroBaseline"
