"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """An unsupported or inconsistent combination of options."""


class UnboundedDomainError(ConfigurationError):
    """A quantity that needs a bounded feasible set was requested on an unbounded one."""


class ScheduleError(ConfigurationError):
    """A stepsize schedule violates its admissibility condition."""


class StatisticsError(Exception):
    """Not enough replications for the requested statistical check."""
