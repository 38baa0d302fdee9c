class CapacityError(RuntimeError):
    """Problem too large for dense methods; use the Krylov propagator instead."""


class NumericalFailure(ArithmeticError):
    pass


class DegenerateSpectrumError(ValueError):
    pass


class EmptyPostselectionError(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration; message starts with the offending key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
