"""Input-purification defenses: statistical outlier removal and random subsampling.

Both are removal-only transformers over event streams: every output event is
one of the input events.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .events import EventStream, resample_fixed
from .metrics import success_rate
from .neighbors import knn_spatial
from .validation import sample_seed


class SorDefense(BaseEstimator, TransformerMixin):
    """Drop events whose mean distance to their k nearest neighbors is an outlier.

    An event is removed when its mean kNN distance exceeds mu + alpha * sigma
    of that statistic over the stream. At least one event is always retained.
    """

    kind = "sor"

    def __init__(self, k=5, alpha=1.1):
        self.k = k
        self.alpha = alpha

    def fit(self, X=None, y=None):
        return self

    def transform(self, stream: EventStream) -> EventStream:
        if self.k < 1 or self.alpha <= 0:
            raise ValueError("need k >= 1 and alpha > 0")
        if stream.n <= self.k:
            raise ValueError(f"need more than k={self.k} events, got {stream.n}")
        _, dist = knn_spatial(stream, self.k)
        mean_dist = dist.mean(axis=1)
        threshold = mean_dist.mean() + self.alpha * mean_dist.std()
        keep = mean_dist <= threshold
        if not np.any(keep):
            keep[np.argmin(mean_dist)] = True
        return stream.with_events(stream.events[keep])


class SrsDefense(BaseEstimator, TransformerMixin):
    """Keep a random fraction of events, without replacement, re-sorted by t."""

    kind = "srs"

    def __init__(self, ratio=0.5, seed=0):
        self.ratio = ratio
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def transform(self, stream: EventStream) -> EventStream:
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        n_keep = int(np.ceil(self.ratio * stream.n))
        rng = np.random.default_rng(self.seed)
        idx = np.sort(rng.choice(stream.n, size=n_keep, replace=False))
        return stream.with_events(stream.events[idx]).sorted_by_t()


def make_defense(kind: str, **params):
    if kind == "sor":
        return SorDefense(**params)
    if kind == "srs":
        return SrsDefense(**params)
    raise ValueError(f"unknown defense kind {kind!r}")


@dataclass
class MetricReport:
    """Aggregate row: success rate plus mean distances over successful samples."""

    sr: float
    chamfer: float | None
    hausdorff: float | None
    l2: float | None
    n_samples: int


def summarize_results(results) -> MetricReport:
    """Undefended aggregate over a list of AttackResult."""
    results = list(results)
    sr = success_rate(results)
    ok = [r for r in results if r.success]
    if ok:
        mean = lambda key: float(np.mean([getattr(r, key) for r in ok]))
        return MetricReport(sr, mean("chamfer"), mean("hausdorff"), mean("l2"), len(results))
    return MetricReport(sr, None, None, None, len(results))


def defended_eval(victim, results, defense, seed: int = 0) -> MetricReport:
    """Re-evaluate attack success after purifying each adversarial stream.

    Each successful adversarial stream is passed through the defense,
    resampled to the victim's event count, and re-classified; samples whose
    attack already failed stay failures. Distance means cover the samples
    that remain successful, measured on the original adversarial streams.
    """
    results = list(results)
    if not results:
        raise ValueError("no attack results to evaluate")
    n_points = victim.n_points_
    still_ok = []
    n_success = 0
    for i, res in enumerate(results):
        if not res.success:
            continue
        purified = defense.transform(res.best_adv)
        fixed = resample_fixed(purified, n_points, sample_seed(seed, i))
        pred = int(np.argmax(victim.predict_logits(fixed.events)))
        if pred != res.label:
            n_success += 1
            still_ok.append(res)
    sr = n_success / len(results)
    if still_ok:
        mean = lambda key: float(np.mean([getattr(r, key) for r in still_ok]))
        return MetricReport(sr, mean("chamfer"), mean("hausdorff"), mean("l2"), len(results))
    return MetricReport(sr, None, None, None, len(results))
