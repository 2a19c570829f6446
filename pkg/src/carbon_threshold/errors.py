"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (CLI exit code 2),
numerical failures from :class:`NumericalError` (exit code 3).
"""


class CarbonThresholdError(Exception):
    pass


class ConfigError(CarbonThresholdError):
    pass


class NumericalError(CarbonThresholdError):
    pass


class MissingKey(ConfigError):
    def __init__(self, name):
        super().__init__(f"missing required key {name!r}")
        self.name = name


class UnknownKey(ConfigError):
    def __init__(self, name):
        super().__init__(f"unknown key {name!r}")
        self.name = name


class InvariantViolation(ConfigError):
    def __init__(self, description, value=None):
        msg = description if value is None else f"{description} (got {value!r})"
        super().__init__(msg)
        self.description = description
        self.value = value


class DriftSlopeExceedsDelta(ConfigError):
    def __init__(self, x, slope, delta):
        super().__init__(f"drift slope {slope:.6g} exceeds delta={delta:.6g} at x={x:.6g}")
        self.x = x


class OutOfDomain(NumericalError):
    def __init__(self, x, lo, hi):
        super().__init__(f"x={x!r} outside [{lo}, {hi}]")
        self.x = x


class StiffnessFailure(NumericalError):
    pass


class NonfiniteCoefficient(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class TruncationTooSmall(NumericalError):
    pass


class NoCrossingWithinBound(NumericalError):
    pass


class SandwichViolation(NumericalError):
    pass


class InversionUnstable(NumericalError):
    pass
