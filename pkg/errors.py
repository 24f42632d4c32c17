"""
Error hierarchy for the time-domain diffraction toolkit
Every failure surfaces as a TimeDiffractionError subclass so the CLI can map it to an exit code
"""


class TimeDiffractionError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1


class DomainError(TimeDiffractionError, ValueError):
    """Physically invalid input (non-positive lengths, forbidden sideband orders, ...)"""


class ContractError(TimeDiffractionError):
    """A pre- or post-condition of an operation does not hold"""


class ConfigurationError(TimeDiffractionError, ValueError):
    """Oracle grid or packet settings that cannot satisfy their contracts"""


class PropagationError(TimeDiffractionError, ArithmeticError):
    """Non-finite amplitudes during wave-packet propagation"""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConfigError(TimeDiffractionError, ValueError):
    """Config file parse error, unknown section/key or badly typed value"""

    exit_code = 2
