"""Spatial and causal temporal K-nearest-neighbor indices over a clean stream.

Both searches use plain Euclidean distance on the normalized (x, y, t)
coordinates. The temporal search restricts candidates to events with
timestamp >= the query's (causality); rows with fewer than k candidates are
padded with the query's own index. Indices are built once per sample, on the
clean events, and stay fixed while the perturbation is optimized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream
from .validation import check_positive, check_unit_range

# Row-block size for the pairwise distance matrix; bounds peak memory at
# roughly block * N * 8 bytes.
_BLOCK = 512


@dataclass
class NeighborIndex:
    """Per-event neighbor tables: (N, k) index and distance arrays."""

    spatial_idx: np.ndarray
    spatial_dist: np.ndarray
    temporal_idx: np.ndarray
    k: int


def _check_stream(stream: EventStream, k: int):
    check_positive(k, "k")
    if stream.n < 2:
        raise ValueError("need at least two events")
    if not stream.is_normalized:
        raise ValueError("neighbor indices are defined on normalized streams")
    for dim, name in ((0, "x"), (1, "y"), (2, "t")):
        check_unit_range(stream.events[:, dim], name)


def _block_distances(xyt: np.ndarray, rows: slice) -> np.ndarray:
    diff = xyt[rows, None, :] - xyt[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _nearest_rows(dist_block, valid_block, row_ids, k):
    """Top-k per row among valid candidates, ties by lower index, self-padded."""
    n_rows, n = dist_block.shape
    idx_out = np.tile(row_ids[:, None], (1, k))
    dist_out = np.zeros((n_rows, k))
    masked = np.where(valid_block, dist_block, np.inf)
    # lexsort: primary key distance, secondary key column index (ascending).
    cols = np.broadcast_to(np.arange(n), (n_rows, n))
    order = np.lexsort((cols, masked), axis=1)
    take = min(k, n)
    cand_idx = order[:, :take]
    cand_dist = np.take_along_axis(masked, cand_idx, axis=1)
    good = np.isfinite(cand_dist)
    idx_out[:, :take] = np.where(good, cand_idx, row_ids[:, None])
    dist_out[:, :take] = np.where(good, cand_dist, 0.0)
    return idx_out, dist_out


def knn_spatial(stream: EventStream, k: int) -> tuple[np.ndarray, np.ndarray]:
    """K nearest other events under Euclidean (x, y, t) distance, self excluded.

    Rows are sorted by distance with ties broken by lower event index; when
    fewer than k other events exist, trailing slots hold the query index with
    distance 0.
    """
    _check_stream(stream, k)
    xyt = stream.xyt
    n = stream.n
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for start in range(0, n, _BLOCK):
        rows = slice(start, min(start + _BLOCK, n))
        row_ids = np.arange(rows.start, rows.stop)
        d = _block_distances(xyt, rows)
        valid = np.ones_like(d, dtype=bool)
        valid[np.arange(rows.stop - rows.start), row_ids] = False
        idx[rows], dist[rows] = _nearest_rows(d, valid, row_ids, k)
    return idx, dist


def knn_temporal(stream: EventStream, k: int, causal: bool = True) -> np.ndarray:
    """K nearest events restricted to causal candidates (t_j >= t_query, j != query).

    With causal=False the candidate set is every other event, which makes the
    result identical to the spatial index (ablation switch). Rows short of k
    candidates are padded with the query index.
    """
    _check_stream(stream, k)
    xyt = stream.xyt
    t = stream.events[:, 2]
    n = stream.n
    idx = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _BLOCK):
        rows = slice(start, min(start + _BLOCK, n))
        row_ids = np.arange(rows.start, rows.stop)
        d = _block_distances(xyt, rows)
        if causal:
            valid = t[None, :] >= t[rows, None]
        else:
            valid = np.ones_like(d, dtype=bool)
        valid[np.arange(rows.stop - rows.start), row_ids] = False
        idx[rows], _ = _nearest_rows(d, valid, row_ids, k)
    return idx


def build_neighbor_index(stream: EventStream, k: int, causal: bool = True) -> NeighborIndex:
    spatial_idx, spatial_dist = knn_spatial(stream, k)
    temporal_idx = knn_temporal(stream, k, causal=causal)
    return NeighborIndex(spatial_idx, spatial_dist, temporal_idx, k)
