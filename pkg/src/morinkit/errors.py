"""Exception hierarchy shared by all modules."""


class MorinError(Exception):
    """Base class for every error raised by the toolkit."""


class IdenticallyZero(MorinError):
    pass


class EndpointRoot(MorinError):
    pass


class NonConvergence(MorinError):
    pass


class NotARoot(MorinError):
    pass


class DimensionMismatch(MorinError):
    pass


class BudgetExhausted(MorinError):
    pass


class OrderUnsupported(MorinError):
    pass


class StepUnderflow(MorinError):
    pass


class NotSingular(MorinError):
    pass


class NotSimple(MorinError):
    pass


class NotInRange(MorinError):
    pass


class IllConditioned(MorinError):
    pass


class ChainTooShort(MorinError):
    pass


class KernelJump(MorinError):
    pass


class CallablesMissing(MorinError):
    pass


class NoConvergence(MorinError):
    pass


class UnknownOracle(MorinError):
    pass
