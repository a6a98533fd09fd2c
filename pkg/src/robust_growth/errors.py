"""Exception hierarchy. Every error records the module that raised it."""


class RobustGrowthError(Exception):
    module = "robust_growth"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self):
        return f"[{self.module}] {self.args[0] if self.args else ''}"


class RangeError(RobustGrowthError, IndexError):
    pass


class NotPositiveDefiniteError(RobustGrowthError, ValueError):
    pass


class PreconditionError(RobustGrowthError, ValueError):
    pass


class BracketError(RobustGrowthError):
    pass


class SingularityError(RobustGrowthError):
    pass


class ConvergenceError(RobustGrowthError):
    pass


class QuadratureError(RobustGrowthError):
    pass


class ContradictionError(RobustGrowthError):
    pass


class GeometryError(RobustGrowthError, ValueError):
    pass


class DomainError(RobustGrowthError, ValueError):
    pass


class HypothesisError(RobustGrowthError):
    """A theorem's hypothesis is visibly violated by the simulated data."""


class EmptyReportError(RobustGrowthError):
    pass


class RegistryError(RobustGrowthError, KeyError):
    pass
