"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid input parameters (grid sizes, offsets, preset params, configs)."""


class UnsupportedModeError(ConfigurationError):
    """A requested computation mode does not apply to the given inputs."""


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class DiagnosticFailure(AssertionError):
    """A sampled property check found a violating witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
