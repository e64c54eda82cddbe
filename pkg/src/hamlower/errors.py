"""Exception taxonomy shared by all hamlower modules.

Every error raised on a bad input or a violated precondition derives from
HamlowerError so callers (and the command line driver) can distinguish
usage problems from genuine verification failures, which are reported as
data, never as exceptions.
"""


class HamlowerError(Exception):
    """Base class for all hamlower errors."""


class ValidationError(HamlowerError):
    """An input object violates a structural precondition."""


class ParseError(ValidationError):
    """A text document could not be parsed; message carries the line number."""


class ResourceLimitError(HamlowerError):
    """A requested dense realization exceeds the configured size budget."""


class DegeneracyError(HamlowerError):
    """A spectral split criterion falls on (or inside) a degenerate cluster."""


class RegimeError(HamlowerError):
    """A perturbative validity condition is violated (coupling vs. gap)."""


class ScheduleError(HamlowerError):
    """The requested error budget cannot be met; message names the constraint."""
