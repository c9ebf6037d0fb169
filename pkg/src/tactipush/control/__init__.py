from .controllers import DFPC, PD, ControlCommand, OpenLoop, Sensor
from .law import ErrorHorizon, GainSchedule, Residual, residual_action
from .trajectory import ARC, LINEAR, SpeedProfile, TrajectorySpec, reference_twist

__all__ = ["ARC", "DFPC", "LINEAR", "PD", "ControlCommand", "ErrorHorizon", "GainSchedule", "OpenLoop",
           "Residual", "Sensor", "SpeedProfile", "TrajectorySpec", "reference_twist", "residual_action"]
