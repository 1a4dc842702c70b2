"""Exception hierarchy shared by the simulation modules."""


class BGQTError(Exception):
    """Base class for all errors raised by this package."""


class StateError(BGQTError, ValueError):
    """An initial-state or grid descriptor cannot be realized on the grid."""


class DescriptorError(BGQTError, ValueError):
    """A potential, distribution or chain descriptor is malformed."""


class CollapseError(BGQTError):
    """A collapse produced a numerically degenerate post-collapse state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateMeasureError(BGQTError):
    """Every sampled configuration carries zero weight."""


class ConfigError(BGQTError, ValueError):
    """An experiment config failed schema or semantic validation."""
