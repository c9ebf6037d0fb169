"""Rollout logs: 1 kHz ground truth plus one record per control tick.

On disk a log is a directory holding ``ticks.npz`` (physics-rate arrays,
written with fixed zip timestamps so identical runs give identical bytes),
``control.jsonl`` (one JSON object per control tick) and ``meta.json``.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .simworld import kernels as K

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)

TICK_COLUMNS = {
    "t": K.R_T, "contact": K.R_CONTACT, "u": K.R_U, "penetration": K.R_PEN, "normal_force": K.R_FN,
    "tangential_force": K.R_FT, "sticking": K.R_STICK,
}


def write_npz(path, arrays: Dict[str, np.ndarray]):
    """``np.savez`` equivalent with reproducible bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


@dataclass
class RolloutLog:
    physics_dt: float
    frame_hz: float
    ticks: np.ndarray  # (n_ticks, R_SIZE) target-stem records after each step
    events: np.ndarray  # (n_ticks, n_stems) event bit flags
    frame_ticks: np.ndarray  # physics tick index at which each frame was taken
    records: List[dict] = field(default_factory=list)
    frames: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_ticks(self):
        return len(self.ticks)

    @property
    def n_frames(self):
        return len(self.frame_ticks)

    def column(self, name):
        return self.ticks[:, TICK_COLUMNS[name]]

    @property
    def u_true_ticks(self):
        u = self.ticks[:, K.R_U].copy()
        u[self.ticks[:, K.R_CONTACT] < 0.5] = np.nan
        return u

    @property
    def ee_positions(self):
        return self.ticks[:, K.R_POS:K.R_POS + 3]

    @property
    def ee_rotations(self):
        return self.ticks[:, K.R_ROT:K.R_ROT + 9].reshape(-1, 3, 3)

    def series(self, key):
        """Per-control-tick column as an array (None becomes NaN)."""
        return np.array([np.nan if r.get(key) is None else r[key] for r in self.records], dtype=float)

    @property
    def control_times(self):
        return self.series("t")

    @property
    def s_true(self):
        return self.series("u_true")

    @property
    def contact_mask(self):
        return np.array([bool(r["in_contact"]) for r in self.records])

    def event_sequence(self, stem=0):
        """(tick, name) pairs in time order for one stem."""
        from .simworld.state import decode_events
        out = []
        for i in np.flatnonzero(self.events[:, stem]):
            for name in decode_events(self.events[i, stem]):
                out.append((int(i), name))
        return out

    def first_contact_tick(self):
        idx = np.flatnonzero(self.ticks[:, K.R_CONTACT] > 0.5)
        return int(idx[0]) if len(idx) else None

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {"ticks": self.ticks, "events": self.events, "frame_ticks": self.frame_ticks}
        if self.frames is not None:
            arrays["frames"] = self.frames.astype("<f4")
        write_npz(directory / "ticks.npz", arrays)
        with open(directory / "control.jsonl", "w") as fh:
            for r in self.records:
                fh.write(dump_json(r) + "\n")
        meta = dict(self.meta, physics_dt=self.physics_dt, frame_hz=self.frame_hz)
        (directory / "meta.json").write_text(dump_json(meta) + "\n")

    @classmethod
    def read(cls, directory):
        directory = Path(directory)
        with np.load(directory / "ticks.npz", allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        records = [json.loads(line) for line in (directory / "control.jsonl").read_text().splitlines() if line]
        meta = json.loads((directory / "meta.json").read_text())
        frames = arrays.get("frames")
        return cls(meta.pop("physics_dt"), meta.pop("frame_hz"), arrays["ticks"], arrays["events"],
                   arrays["frame_ticks"], records, None if frames is None else frames.astype(float), meta)
