"""Exception hierarchy shared by all solver stages."""


class RelscatError(Exception):
    """Base class. ``ray`` optionally identifies the (theta, x, rho) input."""

    def __init__(self, message, ray=None):
        super().__init__(message)
        self.ray = ray

    def __str__(self):
        msg = super().__str__()
        if self.ray is not None:
            msg = f"{msg} [ray={self.ray}]"
        return msg


class SpeedExceeded(RelscatError, ValueError):
    pass


class NegativeInput(RelscatError, ValueError):
    pass


class NonPerpendicular(RelscatError, ValueError):
    pass


class BelowThreshold(RelscatError, ValueError):
    pass


class BelowRho0(RelscatError, ValueError):
    pass


class ConditionViolated(RelscatError):
    pass


class NoConvergence(RelscatError):
    pass


class StepFailure(RelscatError):
    pass


class ExtrapolationDiverged(RelscatError):
    pass


class SlowDecay(RelscatError, ValueError):
    pass


class InsufficientSampling(RelscatError, ValueError):
    pass


class NoRoot(RelscatError):
    pass


class QuadratureError(RelscatError):
    pass


class ConfigError(RelscatError, ValueError):
    """Bad run configuration; ``field`` names the offending section.key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
