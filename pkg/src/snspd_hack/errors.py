"""Exception types shared across the package."""


class ModelDomainError(ValueError):
    """Input outside the physical domain of the lumped model (NaN, inf, negative power...)."""


class IntegrationError(RuntimeError):
    """The transient integration produced a non-finite state."""

    def __init__(self, t, message="non-finite state"):
        self.t = t
        super().__init__(f"{message} at t={t:.6e} s")


class ConfigError(ValueError):
    """Bad configuration value, file or plan."""


class PlanError(ConfigError):
    """An attack plan violates a timing constraint."""
