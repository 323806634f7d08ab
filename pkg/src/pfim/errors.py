"""Exception hierarchy shared by all solver modules."""


class PfimError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PfimError, ValueError):
    pass


class DomainError(PfimError, ValueError):
    pass


class SingularSystemError(PfimError, ArithmeticError):
    """Raised by the dense solver when a pivot is numerically zero."""

    def __init__(self, message, pivot_index):
        super().__init__(message)
        self.pivot_index = pivot_index


class ConvergenceError(PfimError, ArithmeticError):
    """Iteration budget exhausted; ``partial`` holds the last iterate if any."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class GridTooCoarseError(PfimError, ValueError):
    pass


class DegeneratePhaseError(PfimError, ArithmeticError):
    pass


class BoundarySingularError(PfimError, ArithmeticError):
    """The bordered periodic boundary system could not be solved."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class PropagationError(PfimError, ArithmeticError):
    pass


class CatalogError(PfimError, KeyError):
    pass


class ParameterError(PfimError, ValueError):
    pass


class BlowUpError(PfimError, ArithmeticError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class NotSettledError(PfimError, ArithmeticError):
    pass


class BranchStalledError(PfimError, RuntimeError):
    """Continuation could not advance; ``branch`` holds the points found so far."""

    def __init__(self, message, branch):
        super().__init__(message)
        self.branch = branch
