"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_finite(arr, name="array"):
    """Raise ValueError if *arr* contains NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_event_array(events, name="events"):
    """Validate an (N, 4) float event array: shape, finiteness, polarity in {-1, +1}."""
    events = np.asarray(events, dtype=np.float64)
    if events.ndim != 2 or events.shape[1] != 4:
        raise ValueError(f"{name} must have shape (N, 4), got {events.shape}")
    if events.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one event")
    check_finite(events, name)
    pol = events[:, 3]
    if not np.all(np.isin(pol, (-1.0, 1.0))):
        raise ValueError(f"{name} polarity must be -1 or +1")
    return events


def check_unit_range(values, name):
    if np.min(values) < 0.0 or np.max(values) > 1.0:
        raise ValueError(f"{name} outside [0, 1]; stream must be normalized")


def check_positive(value, name):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def rng_from(seed, *keys):
    """Deterministic Generator from a base seed plus optional stream keys."""
    check_seed(seed)
    if keys:
        return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))
    return np.random.default_rng(int(seed))


def sample_seed(seed, index):
    """Per-sample RNG seed for data-parallel campaigns: seed XOR sample index."""
    return int(seed) ^ int(index)
