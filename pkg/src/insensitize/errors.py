"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, mask, weight or run configuration."""


class NumericalError(RuntimeError):
    """A solve failed: singular system, non-convergent inner iteration, divergence.

    ``diagnostics`` carries whatever the failing routine knew at the time.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
