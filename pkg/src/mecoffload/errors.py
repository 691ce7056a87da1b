"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid, missing or unknown configuration values."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class AllocationError(ValueError):
    """A CPU allocation is infeasible: negative shares, overcommitted core, or f_c outside the frequency set."""


class AssociationError(ValueError):
    """An association matrix assigns a UE twice, overloads an AP, or leaves the candidate set."""


class ContractError(ValueError):
    """Inputs that break an operation's precondition."""


class SearchSpaceError(RuntimeError):
    """Exhaustive enumeration would exceed the configured guard."""


class InfeasibleError(RuntimeError):
    """The requested target cannot be met (e.g. duty-cycle calibration)."""


class TrainingDiverged(RuntimeError):
    """Raised when training keeps failing every episode."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
