"""Velocity features, decay weights, and the perturbation smoothing operator.

Each attack iteration the perturbation field is replaced by the average of
two weighted means over fixed neighbor sets: a spatial mean whose weights
decay with neighbor distance, and a temporal mean whose weights decay with
the neighbor's normalized velocity, so fast-moving (noisy) events contribute
less. Weighted means keep constant fields fixed, which is what makes this a
smoothing operator rather than a shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream
from .neighbors import NeighborIndex
from .validation import check_positive

# Guards divisions by zero time gaps between same-timestamp events.
EPS_T = 1e-9


@dataclass
class DiffusionWeights:
    w_spatial: np.ndarray   # (N, k), exp(-dist / sigma_s)
    w_temporal: np.ndarray  # (N, k), exp(-velocity[neighbor] / sigma_t)
    sigma_s: float
    sigma_t: float


def event_velocity(stream: EventStream) -> np.ndarray:
    """Min-max normalized speed between consecutive events, in [0, 1].

    Raw speed of event n is the (x, y) distance to event n-1 divided by the
    time gap (plus EPS_T). The first event copies the second's raw speed. A
    constant raw profile normalizes to all zeros.
    """
    if not stream.is_normalized:
        raise ValueError("velocity is defined on normalized streams")
    xyt = stream.xyt
    n = stream.n
    raw = np.zeros(n)
    if n >= 2:
        d = np.diff(xyt[:, :2], axis=0)
        dt = np.diff(xyt[:, 2])
        if np.any(dt < 0):
            raise ValueError("stream must be sorted by t")
        raw[1:] = np.sqrt((d * d).sum(axis=1)) / (dt + EPS_T)
        raw[0] = raw[1]
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros(n)
    return (raw - lo) / (hi - lo)


def diffusion_weights(index: NeighborIndex, velocity: np.ndarray,
                      sigma_s: float, sigma_t: float,
                      velocity_source: str = "neighbor") -> DiffusionWeights:
    """Exponential-decay weights in (0, 1] from distances and velocities.

    velocity_source picks whose velocity drives the temporal weight: the
    contributing neighbor's (default: fast-moving neighbors contribute less)
    or the query event's ("query", kept for side-by-side comparison).
    """
    check_positive(sigma_s, "sigma_s")
    check_positive(sigma_t, "sigma_t")
    w_s = np.exp(-index.spatial_dist / sigma_s)
    if velocity_source == "neighbor":
        v = velocity[index.temporal_idx]
    elif velocity_source == "query":
        v = np.broadcast_to(velocity[:, None], index.temporal_idx.shape)
    else:
        raise ValueError(f"velocity_source must be 'neighbor' or 'query', got {velocity_source!r}")
    w_t = np.exp(-v / sigma_t)
    return DiffusionWeights(w_s, w_t, sigma_s, sigma_t)


def diffuse(pert: np.ndarray, index: NeighborIndex, weights: DiffusionWeights,
            spatial: bool = True, temporal: bool = True) -> np.ndarray:
    """Smooth an (N, d) perturbation over its spatial and temporal neighbors.

    Each half is a weighted mean of neighbor rows; the result averages the
    enabled halves. The input is not mutated.
    """
    pert = np.asarray(pert, dtype=np.float64)
    if pert.ndim != 2 or pert.shape[0] != index.spatial_idx.shape[0]:
        raise ValueError(
            f"perturbation shape {pert.shape} does not match index with "
            f"{index.spatial_idx.shape[0]} events")
    if not (spatial or temporal):
        raise ValueError("at least one of spatial/temporal must be enabled")
    parts = []
    if spatial:
        num = (pert[index.spatial_idx] * weights.w_spatial[:, :, None]).sum(axis=1)
        parts.append(num / weights.w_spatial.sum(axis=1)[:, None])
    if temporal:
        num = (pert[index.temporal_idx] * weights.w_temporal[:, :, None]).sum(axis=1)
        parts.append(num / weights.w_temporal.sum(axis=1)[:, None])
    if len(parts) == 1:
        return parts[0]
    return (parts[0] + parts[1]) / 2.0
