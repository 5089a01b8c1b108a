"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented range."""


class DomainError(ValueError):
    """A point lies outside the problem's feasible set."""


class ConfigurationError(ValueError):
    """A required constant is missing, or a config record is malformed."""


class ScheduleError(ValueError):
    """The round budget cannot support the requested schedule."""


class ProtocolError(RuntimeError):
    """The query/response or round protocol was violated."""


class BudgetError(RuntimeError):
    """An algorithm needed more rounds than the horizon provides."""
