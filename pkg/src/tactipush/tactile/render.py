"""Synthetic marker-image renderer and its analytic inverse.

Channel layout of a rendered frame:
    0  rest-marker mask (depends on the layout only)
    1  displaced-marker mask
    2  displacement-magnitude heatmap, normalized by the maximal amplitude
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .._jit import USE_NUMBA, optional_njit
from ..core import ContactState, TactileFrame
from ..errors import ValidationError
from ..simworld.models import FingerModel

_DEFAULT_FINGER = FingerModel()


@dataclass(frozen=True)
class MarkerLayout:
    """Linear marker grid on the unrolled conic membrane.

    Rows run along the finger axis (row 0 nearest the camera), columns across
    the membrane. ``sigma`` is the bump width in normalized axial units.
    """

    resolution: int = 64
    rows: int = 8
    cols: int = 8
    dot_radius_frac: float = 0.22
    sigma: float = 0.15
    max_amplitude_frac: float = 0.4
    penetration_scale: float = 0.004  # m
    axial_gain: float = 0.3

    def __post_init__(self):
        if self.resolution not in (32, 64):
            raise ValidationError("resolution must be 32 or 64")
        if self.rows < 2 or self.cols < 2:
            raise ValidationError("marker grid needs at least 2x2 markers")
        if not (0 < self.dot_radius_frac < 0.5):
            raise ValidationError("markers would overlap at rest")

    @property
    def pitch(self):
        """Marker pitch in pixels along rows (axial direction)."""
        return self.resolution / self.rows

    @property
    def pitch_u(self):
        return 1.0 / self.rows

    @property
    def dot_radius(self):
        return self.dot_radius_frac * min(self.resolution / self.rows, self.resolution / self.cols)

    @property
    def max_amplitude(self):
        return self.max_amplitude_frac * self.pitch

    def rest_centers(self):
        py = self.resolution / self.rows
        px = self.resolution / self.cols
        cy = (np.arange(self.rows) + 0.5) * py
        cx = (np.arange(self.cols) + 0.5) * px
        yy, xx = np.meshgrid(cy, cx, indexing="ij")
        return yy, xx

    def row_u(self):
        return (np.arange(self.rows) + 0.5) / self.rows

    def pixel_u(self):
        return (np.arange(self.resolution) + 0.5) / self.resolution


def amplitude(contact: ContactState, layout: MarkerLayout, finger: FingerModel = _DEFAULT_FINGER):
    """Bump amplitude in pixels; strictly increasing in penetration and compliance."""
    if not contact.in_contact or contact.penetration <= 0.0:
        return 0.0
    comp = float(finger.compliance(contact.u)) / finger.compliance_base
    sat = 1.0 - math.exp(-contact.penetration / layout.penetration_scale)
    return layout.max_amplitude * sat * (0.5 + 0.5 * comp)


def displacement_field(u, v, contacts, layout, finger=_DEFAULT_FINGER):
    """Marker displacement (dy, dx) in pixels at normalized coordinates (u, v)."""
    dy = np.zeros(np.broadcast(u, v).shape)
    dx = np.zeros_like(dy)
    for c in contacts:
        a = amplitude(c, layout, finger)
        if a == 0.0:
            continue
        du = (u - c.u) / layout.sigma
        g = a * np.exp(-0.5 * du * du)
        dy = dy + g * layout.axial_gain * du
        dx = dx + g * 2.0 * (v - 0.5)
    return dy, dx


@optional_njit(cache=True)
def _splat_loops(cy, cx, radius, size):
    n = cy.shape[0]
    inv = 1.0 / (2.0 * radius * radius)
    gy = np.empty((size, n))
    gx = np.empty((size, n))
    for i in range(size):
        for m in range(n):
            gy[i, m] = math.exp(-((i + 0.5 - cy[m]) ** 2) * inv)
            gx[i, m] = math.exp(-((i + 0.5 - cx[m]) ** 2) * inv)
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            acc = 0.0
            for m in range(n):
                acc += gy[i, m] * gx[j, m]
            out[i, j] = acc
    return out


def _splat_numpy(cy, cx, radius, size):
    grid = np.arange(size) + 0.5
    gy = np.exp(-((grid[:, None] - cy[None, :]) ** 2) / (2 * radius * radius))
    gx = np.exp(-((grid[:, None] - cx[None, :]) ** 2) / (2 * radius * radius))
    # separable Gaussian: sum_m gy[i,m] * gx[j,m]
    return gy @ gx.T


def splat(cy, cx, radius, size, use_numba=False):
    # the separable numpy form rides on BLAS and beats the compiled loops,
    # so the loop kernel is opt-in (parity tests and the benchmark)
    use = USE_NUMBA and use_numba
    cy = np.ascontiguousarray(cy, dtype=float).reshape(-1)
    cx = np.ascontiguousarray(cx, dtype=float).reshape(-1)
    if use:
        return _splat_loops(cy, cx, float(radius), int(size))
    return _splat_numpy(cy, cx, float(radius), int(size))


_REST_CACHE = {}


def rest_mask(layout: MarkerLayout):
    key = layout
    if key not in _REST_CACHE:
        yy, xx = layout.rest_centers()
        img = np.clip(splat(yy, xx, layout.dot_radius, layout.resolution), 0.0, 1.0)
        img.setflags(write=False)
        _REST_CACHE[key] = img
    return _REST_CACHE[key]


def rest_image(layout: MarkerLayout):
    m = rest_mask(layout)
    return np.stack([m, m, np.zeros_like(m)], axis=-1)


def render(contact, layout: MarkerLayout = MarkerLayout(), noise=None, *, noise_std=0.02,
           finger: FingerModel = _DEFAULT_FINGER, timestamp=0.0) -> TactileFrame:
    """Render one tactile frame.

    ``contact`` may be a single ContactState or a sequence of them (cluster
    contacts superimpose). ``noise`` is an Rng; when given, zero-mean Gaussian
    pixel noise of ``noise_std`` is added before clamping.
    """
    contacts = [contact] if isinstance(contact, ContactState) else list(contact)
    active = [c for c in contacts if c.in_contact and c.penetration > 0.0]
    if not active:
        img = rest_image(layout).copy()
    else:
        n = layout.resolution
        yy, xx = layout.rest_centers()
        mu = yy / n
        mv = xx / n
        dy, dx = displacement_field(mu, mv, active, layout, finger)
        moved = np.clip(splat(yy + dy, xx + dx, layout.dot_radius, n), 0.0, 1.0)
        pu = layout.pixel_u()
        hy, hx = displacement_field(pu[:, None], pu[None, :], active, layout, finger)
        heat = np.clip(np.hypot(hy, hx) / layout.max_amplitude, 0.0, 1.0)
        img = np.stack([rest_mask(layout), moved, heat], axis=-1)
    if noise is not None and noise_std > 0:
        img = np.clip(img + noise.normal(0.0, noise_std, size=img.shape), 0.0, 1.0)
    return TactileFrame(img, float(timestamp))


def _marker_centroids(channel, layout):
    """Intensity-weighted centroid of each marker inside its own grid cell."""
    n = layout.resolution
    py = n // layout.rows
    px = n // layout.cols
    cells = channel[: py * layout.rows, : px * layout.cols].reshape(layout.rows, py, layout.cols, px)
    w = cells.sum(axis=(1, 3))
    gy = np.arange(py) + 0.5
    gx = np.arange(px) + 0.5
    cy = (cells.sum(axis=3) * gy[None, :, None]).sum(axis=1) / np.maximum(w, 1e-12)
    cx = (cells.sum(axis=1) * gx[None, None, :]).sum(axis=2) / np.maximum(w, 1e-12)
    return cy, cx


def per_row_displacement(frame, layout: MarkerLayout):
    px = frame.pixels if isinstance(frame, TactileFrame) else np.asarray(frame)
    ry, rx = _marker_centroids(px[..., 0], layout)
    my, mx = _marker_centroids(px[..., 1], layout)
    mag = np.hypot(my - ry, mx - rx)
    return mag.mean(axis=1)


def oracle_decode(frame, layout: MarkerLayout = MarkerLayout(), eps=1e-9) -> Optional[float]:
    """Invert ``render`` for a single noiseless contact.

    Returns the displacement-weighted centroid of per-row marker displacement
    mapped to the axial coordinate, or ``None`` when nothing moved.
    """
    w = per_row_displacement(frame, layout)
    total = float(w.sum())
    if total <= eps * layout.rows:
        return None
    w2 = w * w
    return float((w2 * layout.row_u()).sum() / w2.sum())
