"""Exception hierarchy shared across the package."""


class PumpcausalError(Exception):
    """Base class for all package-specific errors."""


class DataError(PumpcausalError):
    """Malformed or inconsistent input data (CSV parsing, coverage gaps)."""


class ConfigError(PumpcausalError):
    """Invalid configuration value or unresolvable path."""


class ModelError(PumpcausalError):
    """Dimension mismatch or invalid parameter value in the hazard model."""


class SamplerError(PumpcausalError):
    """Sampler could not start (non-finite target after jittered retries)."""


class LingamError(PumpcausalError):
    """Causal discovery failure (singular data, collinear columns)."""


class InsufficientGroupError(LingamError):
    """Group has too few members for causal discovery."""


class StageError(PumpcausalError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
