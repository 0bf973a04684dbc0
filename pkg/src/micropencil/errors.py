"""Exception hierarchy shared by the oracle and the trace engine."""


class MicroPyError(Exception):
    pass


class InvalidProgram(MicroPyError):
    pass


class DynamicError(MicroPyError):
    """A runtime error of the evaluated program itself."""


class UnboundVariable(DynamicError):
    pass


class MissingAttribute(DynamicError):
    pass


class UndefinedSymbol(DynamicError):
    pass


class BudgetExhausted(MicroPyError):
    pass


class InvalidMark(MicroPyError):
    pass


class StuckContext(MicroPyError):
    """No rewrite rule applies; always an engine bug on validated programs."""


class UnbalancedMarkers(MicroPyError):
    pass


class StepBudgetExceeded(MicroPyError):
    pass


class InvalidInstance(MicroPyError):
    pass


class RejectionLimitExceeded(MicroPyError):
    pass


class CompilationFailure(MicroPyError):
    pass
