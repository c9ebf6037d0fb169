"""Per-trial performance metrics computed from a rollout log."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import MetricsUndefinedError, ValidationError

METRIC_NAMES = ("stem_max_disp", "slip_instances", "disp_integral", "action_integral", "comp_time_ms")


@dataclass(frozen=True)
class MetricsConfig:
    gamma: float = 0.004  # normalized units per frame
    frame_hz: float = 60.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError("slip threshold gamma must be positive")


@dataclass(frozen=True)
class TrialMetrics:
    stem_max_disp: float
    slip_instances: int
    disp_integral: float
    action_integral: float
    comp_time_ms: float

    def as_dict(self):
        return asdict(self)


def _trapz(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(y) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def compute_metrics(log, cfg: MetricsConfig = MetricsConfig()) -> TrialMetrics:
    """Metrics over the control ticks at which the target stem is in contact.

    Displacement is measured against the first contact location; the slip
    count compares consecutive contact frames; the action integral spans
    the whole trial.
    """
    recs = log.records if hasattr(log, "records") else log
    contact = [r for r in recs if r["in_contact"]]
    if len(contact) < 2:
        raise MetricsUndefinedError(f"need at least 2 contact frames, got {len(contact)}")
    s = np.array([r["u_true"] for r in contact], dtype=float)
    t = np.array([r["t"] for r in contact], dtype=float)
    slips = int(np.count_nonzero(np.abs(np.diff(s)) > cfg.gamma))
    t_all = np.array([r["t"] for r in recs], dtype=float)
    a = np.abs(np.array([r.get("a_res", 0.0) for r in recs], dtype=float))
    comp = np.array([r.get("comp_time_ms", 0.0) for r in recs], dtype=float)
    return TrialMetrics(
        stem_max_disp=float(s.max() - s.min()),
        slip_instances=slips,
        disp_integral=_trapz(np.abs(s - s[0]), t),
        action_integral=_trapz(a, t_all),
        comp_time_ms=float(comp.mean()),
    )
