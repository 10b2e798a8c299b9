"""Exception types raised across the package."""


class DuffGapError(Exception):
    """Base class for all package errors."""


class NotSymmetric(DuffGapError, ValueError):
    pass


class NotPositive(DuffGapError, ValueError):
    pass


class DegenerateGap(DuffGapError):
    """The smallest generalized eigenvalue is (numerically) multiple."""


class NearSingular(DuffGapError):
    """lambda sits on a spectral crossing of B2 - lambda*A."""


class LambdaOutOfGap(DuffGapError, ValueError):
    def __init__(self, lam, lambda1, lambda2):
        self.lam = lam
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        super().__init__(
            f"lambda={lam!r} is not inside the open gap ({lambda1!r}, {lambda2!r})"
        )


class GridTooCoarse(DuffGapError, ValueError):
    pass


class StepSizeUnderflow(DuffGapError):
    pass


class MisalignedGrids(DuffGapError, ValueError):
    pass


class StrideTooCoarse(DuffGapError):
    pass


class HorizonTooShort(DuffGapError, ValueError):
    pass


class UnboundedSolution(DuffGapError):
    pass


class ConfigError(DuffGapError, ValueError):
    """Scenario configuration rejected; ``where`` names the offending field."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
