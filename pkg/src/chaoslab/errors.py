"""Exception hierarchy shared by all modules."""


class ChaosLabError(Exception):
    """Base class for every error raised by the package."""


class EmptyDomain(ChaosLabError):
    pass


class Overflow(ChaosLabError):
    pass


class OutsideDomain(ChaosLabError):
    pass


class OutOfRadius(ChaosLabError):
    """Argument of the log-MGF lies outside its radius of finiteness."""


class NotAnalytic(ChaosLabError):
    pass


class CumulantDepth(ChaosLabError):
    """A coefficient needs a cumulant beyond the cached depth."""


class GuardViolated(ChaosLabError):
    """Series convergence guard 8*C*lambda*K < 1 fails."""


class DuplicateSite(ChaosLabError):
    pass


class PowerOverflow(ChaosLabError):
    pass


class NotAvailable(ChaosLabError):
    pass


class SingularInput(ChaosLabError):
    pass


class DegenerateDenominator(ChaosLabError):
    pass


class MethodUnavailable(ChaosLabError):
    pass


class NotBinary(ChaosLabError):
    pass


class AsymmetricDisorder(ChaosLabError):
    pass


class BudgetExceeded(ChaosLabError):
    def __init__(self, message, max_order=None):
        super().__init__(message)
        self.max_order = max_order


class QuadratureBudget(ChaosLabError):
    pass


class ConfigError(ChaosLabError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


class MissingReport(ChaosLabError):
    pass
