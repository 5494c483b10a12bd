"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


class NumericalError(RuntimeError):
    """Numerical failure during a run, e.g. all particles went non-finite
    or a weight sum collapsed to zero (CLI exit code 2)."""
