"""Contact localisation: calibration dataset protocol and the regression CNN."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import ContactState, TactileFrame
from ..errors import ValidationError
from ..nn import tensor as T
from ..nn.checkpoint import load as load_ckpt, save as save_ckpt
from ..nn.layers import Conv2d, Dense, Module
from ..nn.train import TrainingCurve, fit
from ..simworld.models import World
from .render import MarkerLayout, render


@dataclass(frozen=True)
class ClmDatasetSpec:
    n_locations: int = 10
    location_step: float = 0.005  # m
    penetration_step: float = 0.001  # m
    penetrations_per_location: int = 16
    total_samples: int = 150

    def __post_init__(self):
        if self.n_locations < 1 or self.penetrations_per_location < 1:
            raise ValidationError("n_locations and penetrations_per_location must be >= 1")
        if self.location_step <= 0 or self.penetration_step <= 0:
            raise ValidationError("location and penetration steps must be positive")
        if self.n_locations * self.penetrations_per_location < self.total_samples:
            raise ValidationError(
                f"{self.n_locations} locations x {self.penetrations_per_location} penetrations "
                f"cannot reach {self.total_samples} samples")


@dataclass(frozen=True)
class ClmSample:
    frame: TactileFrame
    u: float
    penetration: float
    location: int
    seed: int = 0


def location_labels(spec: ClmDatasetSpec, finger_length: float):
    return np.array([(k + 1) * spec.location_step / finger_length for k in range(spec.n_locations)])


def generate_clm_dataset(spec: ClmDatasetSpec, world: World = World(), rng=None, *,
                         layout: MarkerLayout = MarkerLayout(), noise_std=0.0):
    """Press a rod at ``n_locations`` axial stations in fixed depth increments.

    Station k sits (k+1) steps from the lens. Depth increases until the local
    deformation limit, capped at ``penetrations_per_location``.
    """
    finger = world.finger
    if spec.n_locations * spec.location_step > finger.length + 1e-12:
        raise ValidationError(
            f"location grid spans {spec.n_locations * spec.location_step:.4f} m, "
            f"beyond the finger length {finger.length:.4f} m")
    if noise_std > 0 and rng is None:
        raise ValidationError("noise_std > 0 needs an rng to draw the pixel noise")
    samples = []
    for k, u in enumerate(location_labels(spec, finger.length)):
        limit = float(finger.deformation_limit(u))
        count = int(min(max(math.floor(limit / spec.penetration_step + 1e-9), 1), spec.penetrations_per_location))
        for j in range(1, count + 1):
            depth = j * spec.penetration_step
            contact = ContactState(in_contact=True, u=float(u), penetration=depth,
                                   normal_force=depth / float(finger.compliance(u)), sticking=True)
            frame = render(contact, layout, rng if noise_std > 0 else None, noise_std=noise_std, finger=finger)
            samples.append(ClmSample(frame, float(u), depth, k))
    if len(samples) < spec.total_samples:
        raise ValidationError(
            f"protocol produced {len(samples)} samples, below the target of {spec.total_samples}")
    return samples


_BLOB_HEADER = struct.Struct("<III")


def write_frame_blob(path, pixels):
    h, w, c = pixels.shape
    with open(path, "wb") as fh:
        fh.write(_BLOB_HEADER.pack(h, w, c))
        fh.write(np.ascontiguousarray(pixels, dtype="<f4").tobytes())


def read_frame_blob(path):
    raw = Path(path).read_bytes()
    h, w, c = _BLOB_HEADER.unpack_from(raw)
    return np.frombuffer(raw, dtype="<f4", offset=_BLOB_HEADER.size).reshape(h, w, c).astype(float)


def save_clm_dataset(samples, directory, seed=0):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "label", "penetration", "location", "seed"])
        for i, s in enumerate(samples):
            name = f"{i:05d}.bin"
            write_frame_blob(directory / name, s.frame.pixels)
            w.writerow([name, repr(s.u), repr(s.penetration), s.location, seed])


def load_clm_dataset(directory):
    directory = Path(directory)
    index = directory / "index.csv"
    if not index.exists():
        raise ValidationError(f"dataset_path: no index.csv in {directory}")
    samples = []
    with open(index, newline="") as fh:
        for row in csv.DictReader(fh):
            px = np.clip(read_frame_blob(directory / row["file"]), 0.0, 1.0)
            samples.append(ClmSample(TactileFrame(px), float(row["label"]), float(row["penetration"]),
                                     int(row["location"]), int(row["seed"])))
    return samples


def to_nchw(pixels):
    x = np.asarray(pixels, dtype=float)
    if x.ndim == 3:
        x = x[None]
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


class ClmModel(Module):
    """Two stride-2 conv stages then three dense stages to a scalar."""

    def __init__(self, resolution=64, rng=None, channels=(8, 16), hidden=(32, 16)):
        if resolution not in (32, 64):
            raise ValidationError("resolution must be 32 or 64")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.resolution = resolution
        self.channels = tuple(channels)
        self.hidden = tuple(hidden)
        c1, c2 = channels
        self.conv1 = Conv2d(3, c1, 3, rng, stride=2)
        self.conv2 = Conv2d(c1, c2, 3, rng, stride=2)
        flat = c2 * (resolution // 4) ** 2
        self.fc1 = Dense(flat, hidden[0], rng)
        self.fc2 = Dense(hidden[0], hidden[1], rng)
        self.fc3 = Dense(hidden[1], 1, rng, gain=1.0)
        self.fc3.bias.data[:] = 0.5
        self.validation_mae = None
        self.curve = None

    def forward(self, x):
        h = T.relu(self.conv1(x))
        h = T.relu(self.conv2(h))
        h = T.reshape(h, (h.shape[0], -1))
        h = T.relu(self.fc1(h))
        h = T.relu(self.fc2(h))
        return T.reshape(self.fc3(h), (-1,))

    def flops(self):
        n = self.resolution
        c1, c2 = self.channels
        conv = 2 * 9 * (3 * c1 * (n // 2) ** 2 + c1 * c2 * (n // 4) ** 2)
        flat = c2 * (n // 4) ** 2
        dense = 2 * (flat * self.hidden[0] + self.hidden[0] * self.hidden[1] + self.hidden[1])
        return float(conv + dense)

    def predict_batch(self, pixels):
        x = to_nchw(pixels)
        if x.shape[2] != self.resolution:
            raise ValidationError(f"frame resolution {x.shape[2]} does not match model resolution {self.resolution}")
        return np.clip(self.forward(T.Tensor(x)).data, 0.0, 1.0)

    def meta(self):
        return {"resolution": self.resolution, "channels": list(self.channels), "hidden": list(self.hidden),
                "validation_mae": self.validation_mae}

    def save(self, path, config_hash):
        save_ckpt(path, self.state_dict(), kind="clm", config_hash=config_hash, extra=self.meta())

    @classmethod
    def load(cls, path, config_hash=None):
        tensors, header = load_ckpt(path, kind="clm", config_hash=config_hash)
        meta = header["extra"]
        model = cls(meta["resolution"], channels=meta["channels"], hidden=meta["hidden"])
        model.load_state_dict(tensors)
        model.validation_mae = meta.get("validation_mae")
        return model


@dataclass(frozen=True)
class ClmHyperparams:
    epochs: int = 60
    batch_size: int = 16
    lr: float = 2e-3
    validation_fraction: float = 0.2
    channels: tuple = (8, 16)
    hidden: tuple = (32, 16)


def split_by_location(locations, fraction, rng):
    """Hold out whole interior locations so validation tests interpolation."""
    uniq = np.unique(locations)
    n_val = int(round(fraction * len(uniq)))
    if n_val == 0 or len(uniq) < 3:
        return np.arange(len(locations)), np.zeros(0, dtype=int)
    interior = uniq[1:-1]
    held = np.sort(rng.choice(interior, size=min(n_val, len(interior)), replace=False))
    val_mask = np.isin(locations, held)
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask)


def train_clm(samples, hp: ClmHyperparams = ClmHyperparams(), rng=None, labels=None):
    """Fit a ClmModel by MSE on normalized contact location.

    ``labels`` overrides the sample labels (used for permutation controls).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    y = np.array([s.u for s in samples] if labels is None else labels, dtype=float)
    if len(samples) < 50 or len(np.unique([s.u for s in samples])) < 5:
        raise ValidationError("train_clm needs at least 50 samples with 5 distinct labels")
    locations = np.array([s.location for s in samples])
    x = to_nchw(np.stack([s.frame.pixels for s in samples]))
    res = x.shape[2]
    tr, va = split_by_location(locations, hp.validation_fraction, rng)
    model = ClmModel(res, rng, hp.channels, hp.hidden)

    def batch_loss(idx, epoch):
        sel = tr[idx]
        return T.mse(model.forward(T.Tensor(x[sel])), T.Tensor(y[sel]))

    def validate():
        if len(va) == 0:
            return float("nan")
        return float(np.abs(model.predict_batch(x[va].transpose(0, 2, 3, 1)) - y[va]).mean())

    curve = fit(model.parameters(), len(tr), batch_loss, epochs=hp.epochs, batch_size=hp.batch_size,
                lr=hp.lr, rng=rng, validate=validate if len(va) else None, curve=TrainingCurve())
    model.curve = curve
    model.validation_mae = curve.validation[-1] if curve.validation else None
    model.split = (tr, va)
    return model


def clm_predict(model: ClmModel, frame: TactileFrame) -> float:
    px = frame.pixels if isinstance(frame, TactileFrame) else np.asarray(frame)
    if px.shape[0] != model.resolution:
        raise ValidationError(f"frame resolution {px.shape[0]} does not match model resolution {model.resolution}")
    return float(model.predict_batch(px[None])[0])
