class MdiPlusError(Exception):
    """Base class for errors raised by this package."""


class DataError(MdiPlusError, ValueError):
    """Malformed or out-of-domain input data (CLI exit code 3)."""


class ConfigError(MdiPlusError, ValueError):
    """Invalid or incompatible configuration (CLI exit code 2)."""


class ConvergenceError(MdiPlusError, RuntimeError):
    """An iterative GLM solver hit its iteration cap."""

    def __init__(self, message, lam=None, grad_norm=None, tree=None):
        super().__init__(message)
        self.lam = lam
        self.grad_norm = grad_norm
        self.tree = tree


class DegenerateLeverageError(MdiPlusError, ArithmeticError):
    """A leave-one-out downdate hit leverage numerically equal to one."""

    def __init__(self, row):
        super().__init__(f"leverage of row {row} is numerically 1")
        self.row = row


class ScreeningError(MdiPlusError):
    """Prediction screening removed every candidate (CLI exit code 4)."""


class ExperimentError(MdiPlusError):
    """A simulation replicate failed; carries the replicate id and stage name."""

    def __init__(self, message, replicate=None, stage=None):
        super().__init__(f"replicate {replicate}, stage {stage}: {message}")
        self.replicate = replicate
        self.stage = stage
