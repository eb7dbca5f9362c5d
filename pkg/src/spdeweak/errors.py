"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidOperator(ValueError):
    pass


class InvalidRefinement(ValueError):
    """A step count does not divide the finest resolution of a noise plan."""


class NumericOverflow(OverflowError):
    pass


class DivergenceError(FloatingPointError):
    """A trajectory produced a non-finite coefficient."""

    def __init__(self, step, scheme=""):
        self.step = step
        self.scheme = scheme
        super().__init__(f"non-finite state in {scheme or 'scheme'} at step {step}")


class InsufficientData(ValueError):
    pass


class EstimationDegraded(RuntimeError):
    """Too many Monte Carlo samples aborted for the estimate to be trusted."""


class UnsupportedOracle(ValueError):
    pass


class UnsupportedFunctional(UnsupportedOracle):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration; ``location`` names the field and line."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
