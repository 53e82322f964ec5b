"""Distance metrics over (x, y, t) point sets and the attack success rate.

Chamfer and Hausdorff are directed, adversarial -> clean, matching the
direction of the distance term optimized by the attacks. All distances are
defined on the normalized unit cube.
"""

from __future__ import annotations

import numpy as np

# Row-block size bounding the pairwise distance matrix footprint.
_BLOCK = 1024


def _as_points(arr, name):
    pts = np.asarray(arr, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return pts


def nearest_clean(adv, clean):
    """Per adversarial point: (distance to, index of) the nearest clean point.

    Ties resolve to the lower clean index. This is the single implementation
    behind both the Chamfer loss inside the attacks and the reported metric.
    Distances accumulate as (dx*dx + dy*dy) + dz*dz with the square root taken
    on the selected minimum, which is bit-identical to sqrt-per-pair-then-min.
    """
    adv = _as_points(adv, "adv")
    clean = _as_points(clean, "clean")
    dists = np.empty(adv.shape[0])
    idx = np.empty(adv.shape[0], dtype=np.int64)
    cx, cy, cz = clean[:, 0], clean[:, 1], clean[:, 2]
    for start in range(0, adv.shape[0], _BLOCK):
        rows = slice(start, min(start + _BLOCK, adv.shape[0]))
        d2 = adv[rows, 0, None] - cx[None, :]
        d2 *= d2
        dy = adv[rows, 1, None] - cy[None, :]
        d2 += dy * dy
        dz = adv[rows, 2, None] - cz[None, :]
        d2 += dz * dz
        idx[rows] = np.argmin(d2, axis=1)
        dists[rows] = np.sqrt(d2[np.arange(d2.shape[0]), idx[rows]])
    return dists, idx


def chamfer_distance(adv, clean) -> float:
    """Mean over adversarial points of the minimum distance to the clean set."""
    dists, _ = nearest_clean(adv, clean)
    return float(np.mean(dists))


def hausdorff_distance(adv, clean) -> float:
    """Max over adversarial points of the minimum distance to the clean set."""
    dists, _ = nearest_clean(adv, clean)
    return float(np.max(dists))


def l2_distance(adv, clean) -> float:
    """Global Euclidean norm of the displacement matrix.

    Requires equal counts and index alignment, which perturbation-based
    attacks preserve.
    """
    adv = _as_points(adv, "adv")
    clean = _as_points(clean, "clean")
    if adv.shape[0] != clean.shape[0]:
        raise ValueError(f"event counts differ: {adv.shape[0]} vs {clean.shape[0]}")
    diff = adv - clean
    return float(np.sqrt((diff * diff).sum()))


def success_rate(results) -> float:
    """Fraction of attack results flagged successful."""
    results = list(results)
    if not results:
        raise ValueError("success_rate of an empty result list")
    return sum(1 for r in results if r.success) / len(results)
