"""Exception types raised across the package."""


class LTLpError(Exception):
    """Base class for all package errors."""


class InvalidInput(LTLpError, ValueError):
    pass


class EmptySupport(InvalidInput):
    pass


class InvalidScale(InvalidInput):
    pass


class DimMismatch(InvalidInput):
    pass


class ChannelMismatch(InvalidInput):
    pass


class ShapeMismatch(InvalidInput):
    pass


class GridMismatch(InvalidInput):
    pass


class MassMismatch(InvalidInput):
    pass


class DegenerateRow(LTLpError):
    pass


class NumericalOverflow(LTLpError, FloatingPointError):
    """Kernel under/overflow in the scaling-form Sinkhorn; retry with ``log_domain=True``."""


class OutOfRange(InvalidInput):
    pass


class NoSuchComponent(InvalidInput):
    pass


class RankError(InvalidInput):
    pass


class DegenerateDensity(LTLpError):
    pass


class SolverFailure(LTLpError):
    pass


class StepTooLarge(LTLpError):
    pass


class InvalidParams(InvalidInput):
    pass


class InvalidGamma(InvalidParams):
    pass


class NegativeMass(InvalidInput):
    pass


class InvalidPrice(InvalidInput):
    pass


class DegenerateWindow(LTLpError):
    pass


class EmptyTrain(InvalidInput):
    pass


class UndefinedStatistic(LTLpError):
    pass


class UnconvergedWarning(RuntimeWarning):
    """Sinkhorn stopped at ``max_iterations`` before reaching tolerance."""


class StratifyWarning(UserWarning):
    pass


class InsufficientHistoryWarning(UserWarning):
    pass
