from .models import FingerModel, StemModel, World
from .state import StepResult, WorldState, decode_events, energy, step

__all__ = ["FingerModel", "StemModel", "World", "StepResult", "WorldState", "decode_events", "energy", "step"]
