"""Exception types shared across the package."""


class TactipushError(Exception):
    pass


class ValidationError(TactipushError, ValueError):
    """Bad input: wrong shapes, violated preconditions, malformed config."""


class ConfigError(ValidationError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnsynchronizableError(TactipushError):
    pass


class IntegrationDivergedError(TactipushError):
    def __init__(self, field, tick=None):
        self.field = field
        self.tick = tick
        where = "" if tick is None else f" at tick {tick}"
        super().__init__(f"integration diverged: non-finite value in {field}{where}")


class NonFiniteCommandError(TactipushError):
    def __init__(self, tick):
        self.tick = tick
        super().__init__(f"controller returned a non-finite command at control tick {tick}")


class TrainingFailedError(TactipushError):
    def __init__(self, message, last_finite_loss=None):
        self.last_finite_loss = last_finite_loss
        super().__init__(f"{message} (last finite loss: {last_finite_loss})")


class ModelNotReadyError(TactipushError):
    pass


class MetricsUndefinedError(TactipushError):
    pass
