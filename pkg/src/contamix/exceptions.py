"""Exception hierarchy shared by the fitting, data and CLI layers."""


class ContamixError(Exception):
    """Base class for all errors raised by contamix."""


class FactorizationError(ContamixError, ValueError):
    """A covariance matrix is not symmetric positive definite."""


class ComponentDeathError(ContamixError):
    """A mixture component lost (almost) all of its posterior mass."""

    def __init__(self, component, mass):
        self.component = component
        self.mass = mass
        super().__init__(
            f"component {component} collapsed (effective size {mass:.3g})"
        )


class UnderflowError(ContamixError, FloatingPointError):
    """The mixture density underflowed at an observation even in log space."""

    def __init__(self, row):
        self.row = row
        super().__init__(f"mixture density is zero (or NaN) at row {row}")


class DataError(ContamixError, ValueError):
    """Input data could not be parsed or fails validation."""


class ConfigError(ContamixError, ValueError):
    """Invalid configuration or command-line usage."""


class FitError(ContamixError):
    """A model could not be fitted at all."""
