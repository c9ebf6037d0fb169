"""Horizon error and the residual action law."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class GainSchedule:
    """Per-horizon-index gains, (rad/s) per unit of normalized displacement."""

    k_p: tuple
    k_d: tuple

    def __post_init__(self):
        kp = tuple(float(x) for x in np.ravel(self.k_p))
        kd = tuple(float(x) for x in np.ravel(self.k_d))
        if len(kp) != len(kd):
            raise ValidationError(f"k_p has {len(kp)} entries but k_d has {len(kd)}")
        if any(g < 0 for g in kp + kd):
            raise ValidationError("gains must be non-negative")
        object.__setattr__(self, "k_p", kp)
        object.__setattr__(self, "k_d", kd)

    @classmethod
    def uniform(cls, horizon, kp, kd):
        return cls((kp,) * horizon, (kd,) * horizon)

    def __len__(self):
        return len(self.k_p)

    def scaled(self, alpha):
        return GainSchedule(tuple(alpha * g for g in self.k_p), tuple(alpha * g for g in self.k_d))


@dataclass(frozen=True)
class ErrorHorizon:
    e: np.ndarray
    e_dot: np.ndarray

    def __post_init__(self):
        if np.shape(self.e) != np.shape(self.e_dot):
            raise ValidationError("e and e_dot lengths differ")


def error_horizon(s_hat, s_t: float, prev: Optional[ErrorHorizon], tick: float) -> ErrorHorizon:
    """e_i = s_hat_i - s_t; e_dot by backward difference against ``prev``."""
    s_hat = np.asarray(getattr(s_hat, "s_hat", s_hat), dtype=float)
    if not (0.0 <= s_t <= 1.0):
        raise ValidationError(f"s_t must lie in [0, 1], got {s_t}")
    e = s_hat - s_t
    if prev is None:
        e_dot = np.zeros_like(e)
    else:
        if len(prev.e) != len(e):
            raise ValidationError("previous horizon has a different length")
        e_dot = (e - prev.e) / tick
    return ErrorHorizon(e, e_dot)


@dataclass(frozen=True)
class Residual:
    value: float
    raw: float
    saturated: bool

    def __float__(self):
        return self.value


def residual_action(err: ErrorHorizon, gains: GainSchedule, limit: float = 0.5) -> Residual:
    """Negated gain-weighted sum over the horizon, then clipped to +-limit."""
    if len(err.e) != len(gains):
        raise ValidationError(f"horizon length {len(err.e)} does not match {len(gains)} gains")
    raw = -float(np.dot(gains.k_p, err.e) + np.dot(gains.k_d, err.e_dot))
    value = float(np.clip(raw, -limit, limit))
    return Residual(value, raw, abs(raw) > limit)
