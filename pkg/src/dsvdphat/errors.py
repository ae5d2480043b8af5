class ConfigError(ValueError):
    """Invalid parameter or configuration value."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SignalTooShortError(ValueError):
    """Signal holds fewer samples than a single analysis frame."""


class GsvdError(ArithmeticError):
    """Noise correlation matrix too ill-conditioned to invert for one bin."""
