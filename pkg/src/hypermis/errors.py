"""Exception types shared across the package."""


class HyperMISError(Exception):
    """Base class for all errors raised by hypermis."""


class InvalidHypergraph(HyperMISError, ValueError):
    pass


class NotIndependent(HyperMISError, ValueError):
    """Committing the given set would create the empty edge."""


class NotSingletonResidual(HyperMISError, ValueError):
    pass


class ParamsInfeasible(HyperMISError, ValueError):
    pass


class SizeMismatch(HyperMISError, ValueError):
    pass


class BudgetExceeded(HyperMISError, RuntimeError):
    pass


class Q2CertificateMissing(HyperMISError, ValueError):
    pass


class RoundCapExceeded(HyperMISError, RuntimeError):
    pass


class IterationCapExceeded(HyperMISError, RuntimeError):
    pass


class Infeasible(HyperMISError, ValueError):
    """Instance-generation parameters cannot be met."""
