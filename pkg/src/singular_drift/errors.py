"""Exception types raised by the library."""


class DomainError(ValueError):
    """A numerical argument lies outside the domain of a formula."""


class ArgumentError(ValueError):
    """A structural argument (count, size, flag) is invalid."""


class UnsupportedKernelError(DomainError):
    """The Fourier integral has no Gaussian damping and is not evaluated."""


class HypothesisViolation(DomainError):
    """The positivity hypothesis of the portfolio root equation fails."""


class ConfigError(ValueError):
    """An experiment configuration file is malformed or inconsistent."""
