"""Exception hierarchy shared by every module."""


class DebugError(Exception):
    """Base class for all errors raised by lassodebug."""


class SingularDesign(DebugError):
    """Gram matrix of the (stacked) design is numerically singular."""


class SingularSubmatrix(DebugError):
    """Restricted projector block P_perp[T, T] is not invertible.

    ``report`` carries whatever could still be computed (e.g. b_min).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MaxIterExceeded(DebugError):
    """Iterative solver stopped before reaching its tolerance.

    The best iterate is attached as ``result`` so callers can still use it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateDirection(DebugError):
    """Orthogonal design with f_i = w_i = 0 in a bug direction."""


class InsufficientRows(DebugError):
    """Fewer retained rows than features when estimating the noise scale."""


class ContaminationTooHigh(InsufficientRows):
    """Detected support grew so large that the clean remainder has l <= p."""


class MaxRoundsExceeded(DebugError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonPositiveLambdaU(DebugError):
    pass


class BudgetExceeded(DebugError):
    """Combinatorial enumeration would exceed the configured cap."""


class ParseError(DebugError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NonNumericCell(ParseError):
    pass


class MissingLabelColumn(DebugError):
    pass


class ConfigError(DebugError):
    pass
