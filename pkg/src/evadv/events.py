"""Event-stream data model, normalization and synthetic dataset generation.

An event stream is an ordered set of (x, y, t, p) events. Raw streams carry
pixel coordinates and microsecond timestamps; before any attack the three
continuous dimensions are mapped to the unit cube so that distance metrics
and decay scales are comparable across sensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .validation import check_event_array, check_seed, check_unit_range

SCENARIO_KINDS = ("translating-bar", "rotating-dot", "expanding-ring", "static-flicker")


class Event(NamedTuple):
    x: float
    y: float
    t: float
    p: float


@dataclass(frozen=True)
class NormState:
    """Affine parameters of the raw -> unit-cube mapping, kept for round-trips."""

    width: float
    height: float
    t_min: float
    t_max: float


@dataclass
class EventStream:
    """Events as an (N, 4) float64 array of columns x, y, t, p.

    ``norm`` is None for raw streams and holds the affine parameters after
    :func:`normalize`. Arrays are treated as immutable; operations return new
    streams.
    """

    events: np.ndarray
    sensor_size: tuple[int, int]
    norm: NormState | None = None

    def __post_init__(self):
        self.events = check_event_array(self.events)

    @property
    def n(self) -> int:
        return self.events.shape[0]

    @property
    def xyt(self) -> np.ndarray:
        return self.events[:, :3]

    @property
    def polarity(self) -> np.ndarray:
        return self.events[:, 3]

    @property
    def is_normalized(self) -> bool:
        return self.norm is not None

    def event(self, i: int) -> Event:
        return Event(*self.events[i])

    def with_events(self, events: np.ndarray) -> "EventStream":
        return replace(self, events=np.array(events, dtype=np.float64))

    def sorted_by_t(self) -> "EventStream":
        order = np.argsort(self.events[:, 2], kind="stable")
        return self.with_events(self.events[order])


@dataclass
class LabeledSample:
    stream: EventStream
    label: int


@dataclass
class SyntheticScenario:
    """Parameters of one synthetic motion class.

    noise_rate is the fraction of events drawn uniformly over the sensor
    volume with random polarity; the rest follow the moving structure.
    """

    kind: str
    speed: float = 0.6       # fraction of sensor width travelled over the stream
    angle: float = 0.3       # motion direction, radians
    radius_rate: float = 0.4  # ring growth, fraction of min sensor dim over the stream
    noise_rate: float = 0.05
    jitter_px: float = 1.0   # spatial thickness of the structure, pixels
    sensor_size: tuple[int, int] = (128, 128)
    duration_us: float = 100_000.0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError(f"noise_rate must be in [0, 1), got {self.noise_rate}")

    @property
    def label(self) -> int:
        return SCENARIO_KINDS.index(self.kind)


def normalize(stream: EventStream) -> EventStream:
    """Map x, y, t onto [0, 1] via per-dimension affine transforms.

    x and y are divided by the sensor width and height; t is shifted and
    scaled by its own extent. The affine parameters are recorded so that
    :func:`denormalize` is an exact inverse. Event order is unchanged.
    """
    if stream.is_normalized:
        raise ValueError("stream is already normalized")
    width, height = stream.sensor_size
    t = stream.events[:, 2]
    t_min, t_max = float(np.min(t)), float(np.max(t))
    if t_max == t_min:
        raise ValueError("zero temporal extent")
    out = stream.events.copy()
    out[:, 0] /= width
    out[:, 1] /= height
    out[:, 2] = (t - t_min) / (t_max - t_min)
    for dim, name in ((0, "x"), (1, "y"), (2, "t")):
        check_unit_range(out[:, dim], name)
    return EventStream(out, stream.sensor_size, NormState(width, height, t_min, t_max))


def denormalize(stream: EventStream) -> EventStream:
    """Exact inverse of :func:`normalize`; polarity untouched."""
    if stream.norm is None:
        raise ValueError("stream has no normalization state")
    ns = stream.norm
    out = stream.events.copy()
    out[:, 0] *= ns.width
    out[:, 1] *= ns.height
    out[:, 2] = out[:, 2] * (ns.t_max - ns.t_min) + ns.t_min
    return EventStream(out, stream.sensor_size, None)


def _signal_events(scenario: SyntheticScenario, n: int, rng: np.random.Generator) -> np.ndarray:
    # All four classes share the same annular region of the sensor so that
    # absolute position carries no class information; only the coupling
    # between position and time (the motion signature) separates them.
    w, h = scenario.sensor_size
    dur = scenario.duration_us
    ring_r = 0.3 * min(w, h)
    cx, cy = w / 2.0, h / 2.0
    t = rng.uniform(0.0, dur, size=n)
    kind = scenario.kind
    if kind == "translating-bar":
        # Short bar sweeping along a chord through the annulus; x tracks t.
        travel = scenario.speed * w
        x = cx - travel / 2.0 + travel * t / dur
        y = cy + rng.uniform(-0.08 * h, 0.08 * h, size=n)
        xy = np.stack([x, y], axis=1)
        xy += rng.normal(0.0, 0.5 * scenario.jitter_px, size=(n, 2))
    elif kind == "rotating-dot":
        # Angular position is an exact function of t; only the radius jitters,
        # so the azimuth stays monotone in time. The phase varies mildly per
        # sample so the class stays learnable at desk scale.
        omega = 1.5 * math.pi / dur
        theta0 = scenario.angle + rng.uniform(0.0, 0.3)
        theta = theta0 + omega * t
        radius = ring_r + rng.normal(0.0, scenario.jitter_px, size=n)
        xy = np.stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)], axis=1)
    elif kind == "expanding-ring":
        # Radius sweeps across the annulus band; azimuth is uniform, so the
        # only temporal structure is the radius-time coupling.
        band = scenario.radius_rate * 0.4 * min(w, h)
        radius = ring_r - band / 2.0 + band * t / dur
        radius = radius + rng.normal(0.0, 0.8 * scenario.jitter_px, size=n)
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        xy = np.stack([cx + radius * np.cos(phi), cy + radius * np.sin(phi)], axis=1)
    else:  # static-flicker
        # Four static pillars on the annulus, firing uniformly over time.
        theta_g = scenario.angle + rng.uniform(0.0, 0.3)
        azimuths = theta_g + np.array([0.0, 0.5, 1.0, 1.5]) * math.pi
        which = rng.integers(0, 4, size=n)
        theta = azimuths[which]
        radius = ring_r + rng.normal(0.0, scenario.jitter_px, size=n)
        xy = np.stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)], axis=1)
        xy += rng.normal(0.0, scenario.jitter_px, size=(n, 2))
    xy[:, 0] = np.clip(xy[:, 0], 0.0, w)
    xy[:, 1] = np.clip(xy[:, 1], 0.0, h)
    pol = rng.choice([-1.0, 1.0], size=n)
    return np.column_stack([xy, t, pol])


def generate_synthetic(scenario: SyntheticScenario, n_events: int, seed: int) -> LabeledSample:
    """Deterministic synthetic stream for one scenario; label is the kind index.

    Exactly round(noise_rate * n_events) events are uniform noise over the
    sensor volume; the rest lie on the moving structure with timestamps
    consistent with its motion. Events are returned sorted by t, raw units.
    """
    if n_events < 16:
        raise ValueError(f"n_events must be >= 16, got {n_events}")
    rng = np.random.default_rng(check_seed(seed))
    n_noise = int(round(scenario.noise_rate * n_events))
    n_signal = n_events - n_noise
    signal = _signal_events(scenario, n_signal, rng)
    w, h = scenario.sensor_size
    noise_xy = rng.uniform([0.0, 0.0], [w, h], size=(n_noise, 2))
    noise_t = rng.uniform(0.0, scenario.duration_us, size=n_noise)
    noise_p = rng.choice([-1.0, 1.0], size=n_noise)
    noise = np.column_stack([noise_xy, noise_t, noise_p])
    events = np.concatenate([signal, noise], axis=0)
    events = events[np.argsort(events[:, 2], kind="stable")]
    stream = EventStream(events, scenario.sensor_size)
    return LabeledSample(stream, scenario.label)


def resample_fixed(stream: EventStream, n: int, seed: int) -> EventStream:
    """Resample to exactly n events, re-sorted by t.

    Uniform subset without replacement when the stream has at least n events,
    with replacement otherwise (victim networks consume a fixed count).
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(check_seed(seed))
    if stream.n >= n:
        idx = rng.choice(stream.n, size=n, replace=False)
    else:
        idx = rng.choice(stream.n, size=n, replace=True)
    picked = stream.events[np.sort(idx)]
    picked = picked[np.argsort(picked[:, 2], kind="stable")]
    return replace(stream, events=picked)


def default_scenarios(noise_rate: float = 0.05,
                      sensor_size: tuple[int, int] = (128, 128),
                      duration_us: float = 100_000.0) -> list[SyntheticScenario]:
    """One scenario per class, in label order."""
    return [
        SyntheticScenario(kind, noise_rate=noise_rate, sensor_size=sensor_size,
                          duration_us=duration_us)
        for kind in SCENARIO_KINDS
    ]
