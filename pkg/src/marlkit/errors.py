"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array or per-agent list has the wrong shape."""


class NonFiniteError(FloatingPointError):
    """A gradient, loss or parameter became NaN/inf."""


class EpisodeDoneError(RuntimeError):
    """``step`` was called on an environment whose episode already ended."""


class ActionError(ValueError):
    """An action is outside the declared action space."""


class LayoutError(ValueError):
    """A layout is malformed or could not be generated."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated or of an unsupported version."""


class ConfigError(ValueError):
    """A run configuration is invalid. ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ExpertError(RuntimeError):
    """The imitation expert could not label a visited state."""
