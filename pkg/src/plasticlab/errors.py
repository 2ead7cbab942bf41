"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad value, unknown key, or inconsistent sections."""


class GenomeFormatError(RuntimeError):
    """Genome or checkpoint file is malformed, corrupted, or incompatible."""


class NumericalBlowup(RuntimeError):
    """Non-finite state encountered mid-rollout; the episode is aborted."""
