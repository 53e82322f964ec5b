"""Toy permutation-invariant point classifier with exact input gradients.

A PointNet-style network at desk scale: a shared per-event MLP (4 -> h1 ->
h2, tanh), channel-wise max pooling over events, and a small head
(h2 -> head -> C, tanh then linear). tanh keeps the network smooth so
analytic gradients can be verified against finite differences; the only
non-smooth pieces are the max pool (subgradient routed to the lowest-index
argmax event) and the losses' hinges.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import losses
from .validation import check_finite, rng_from

_PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


def _init_params(n_classes, hidden1, hidden2, head_hidden, rng):
    def layer(fan_in, fan_out):
        w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out))
        return w, np.zeros(fan_out)

    w1, b1 = layer(4, hidden1)
    w2, b2 = layer(hidden1, hidden2)
    w3, b3 = layer(hidden2, head_hidden)
    w4, b4 = layer(head_hidden, n_classes)
    return dict(zip(_PARAM_ORDER, (w1, b1, w2, b2, w3, b3, w4, b4)))


def _forward(params, events):
    """Shared forward; works for a single (N, 4) sample or a (B, N, 4) batch."""
    h1 = np.tanh(events @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    amax = np.argmax(h2, axis=-2)
    if events.ndim == 2:
        pooled = h2[amax, np.arange(h2.shape[1])]
    else:
        pooled = np.take_along_axis(h2, np.expand_dims(amax, -2), axis=-2).squeeze(-2)
    h3 = np.tanh(pooled @ params["w3"] + params["b3"])
    logits = h3 @ params["w4"] + params["b4"]
    return logits, (h1, h2, amax, h3)


def _backward_input(params, events, cache, dlogits):
    """Gradient of sum(dlogits * logits) w.r.t. the input events."""
    h1, h2, amax, h3 = cache
    da3 = (dlogits @ params["w4"].T) * (1.0 - h3 * h3)
    dpool = da3 @ params["w3"].T
    if events.ndim == 2:
        # Only argmax rows receive pool gradient; rows outside them are
        # exactly zero, so the matmuls can be restricted to the active rows.
        rows = np.unique(amax)
        dh2 = np.zeros((rows.size, h2.shape[1]))
        dh2[np.searchsorted(rows, amax), np.arange(h2.shape[1])] = dpool
        da2 = dh2 * (1.0 - h2[rows] * h2[rows])
        da1 = (da2 @ params["w2"].T) * (1.0 - h1[rows] * h1[rows])
        grad = np.zeros((events.shape[0], params["w1"].shape[0]))
        grad[rows] = da1 @ params["w1"].T
        return grad
    dh2 = np.zeros_like(h2)
    np.put_along_axis(dh2, np.expand_dims(amax, -2), np.expand_dims(dpool, -2), axis=-2)
    da2 = dh2 * (1.0 - h2 * h2)
    da1 = (da2 @ params["w2"].T) * (1.0 - h1 * h1)
    return da1 @ params["w1"].T


def _backward_params(params, events, cache, dlogits):
    h1, h2, amax, h3 = cache
    da3 = (dlogits @ params["w4"].T) * (1.0 - h3 * h3)
    dpool = da3 @ params["w3"].T
    dh2 = np.zeros_like(h2)
    np.put_along_axis(dh2, np.expand_dims(amax, -2), np.expand_dims(dpool, -2), axis=-2)
    da2 = dh2 * (1.0 - h2 * h2)
    da1 = (da2 @ params["w2"].T) * (1.0 - h1 * h1)
    pooled = np.take_along_axis(h2, np.expand_dims(amax, -2), axis=-2).squeeze(-2)
    sum_bn = tuple(range(events.ndim - 1))  # (0,) single sample, (0, 1) batched
    grads = {
        "w1": np.tensordot(events, da1, axes=(sum_bn, sum_bn)),
        "b1": da1.sum(axis=sum_bn),
        "w2": np.tensordot(h1, da2, axes=(sum_bn, sum_bn)),
        "b2": da2.sum(axis=sum_bn),
        "w3": pooled.reshape(-1, pooled.shape[-1]).T @ da3.reshape(-1, da3.shape[-1]),
        "b3": da3.reshape(-1, da3.shape[-1]).sum(axis=0),
        "w4": h3.reshape(-1, h3.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1]),
        "b4": dlogits.reshape(-1, dlogits.shape[-1]).sum(axis=0),
    }
    return grads


def maxpool_tie_margin(params, events) -> float:
    """Smallest gap between the top two pooled activations across channels.

    Finite-difference gradient checks are only meaningful away from pooling
    ties; callers skip instances where this margin is tiny.
    """
    _, (_, h2, _, _) = _forward(params, np.asarray(events, dtype=np.float64))
    top2 = np.sort(h2, axis=0)[-2:, :]
    return float(np.min(top2[1] - top2[0]))


class EventPointNet(BaseEstimator, ClassifierMixin):
    """Victim classifier over normalized event streams.

    fit consumes X of shape (n_samples, n_events, 4) with events already
    normalized to the unit cube, and integer labels y. Training runs Adam on
    cross-entropy, fully determined by ``seed``.
    """

    def __init__(self, n_classes=4, hidden1=32, hidden2=64, head_hidden=32,
                 epochs=60, lr=3e-3, batch_size=32, val_fraction=0.2, seed=0):
        self.n_classes = n_classes
        self.hidden1 = hidden1
        self.hidden2 = hidden2
        self.head_hidden = head_hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.seed = seed

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 3 or X.shape[-1] != 4:
            raise ValueError(f"X must have shape (n_samples, n_events, 4), got {X.shape}")
        if len(X) != len(y) or len(X) == 0:
            raise ValueError("X and y must be non-empty and the same length")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError("labels out of range")
        check_finite(X, "X")

        rng = rng_from(self.seed)
        params = _init_params(self.n_classes, self.hidden1, self.hidden2,
                              self.head_hidden, rng)

        order = rng.permutation(len(X))
        n_val = int(round(self.val_fraction * len(X)))
        val_idx, train_idx = order[:n_val], order[n_val:]
        if len(train_idx) == 0:
            raise ValueError("validation split leaves no training samples")
        X_train, y_train = X[train_idx], y[train_idx]

        moment1 = {k: np.zeros_like(p) for k, p in params.items()}
        moment2 = {k: np.zeros_like(p) for k, p in params.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        for _ in range(self.epochs):
            perm = rng.permutation(len(X_train))
            for start in range(0, len(perm), self.batch_size):
                batch = perm[start:start + self.batch_size]
                xb, yb = X_train[batch], y_train[batch]
                logits, cache = _forward(params, xb)
                shifted = logits - logits.max(axis=1, keepdims=True)
                p = np.exp(shifted)
                p /= p.sum(axis=1, keepdims=True)
                dlogits = p
                dlogits[np.arange(len(yb)), yb] -= 1.0
                dlogits /= len(yb)
                grads = _backward_params(params, xb, cache, dlogits)
                step += 1
                c1 = 1.0 - beta1 ** step
                c2 = 1.0 - beta2 ** step
                for k in params:
                    moment1[k] = beta1 * moment1[k] + (1.0 - beta1) * grads[k]
                    moment2[k] = beta2 * moment2[k] + (1.0 - beta2) * grads[k] ** 2
                    params[k] = params[k] - self.lr * (moment1[k] / c1) / (np.sqrt(moment2[k] / c2) + eps)

        self.weights_ = params
        self.classes_ = np.arange(self.n_classes)
        self.n_points_ = X.shape[1]
        self.train_accuracy_ = float(np.mean(self._predict_params(X_train) == y_train))
        if n_val:
            self.val_accuracy_ = float(np.mean(self._predict_params(X[val_idx]) == y[val_idx]))
        else:
            self.val_accuracy_ = self.train_accuracy_
        return self

    def _predict_params(self, X):
        logits, _ = _forward(self.weights_, X)
        return np.argmax(logits, axis=-1)

    # ------------------------------------------------------------------
    # inference and gradients
    # ------------------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise ValueError("classifier is not fitted")

    def _check_input(self, events):
        events = np.asarray(events, dtype=np.float64)
        if not np.all(np.isfinite(events)):
            raise ValueError("input events contain non-finite values")
        for w in self.weights_.values():
            if not np.all(np.isfinite(w)):
                raise ValueError("model parameters contain non-finite values")
        return events

    def predict_logits(self, X) -> np.ndarray:
        self._check_fitted()
        X = self._check_input(X)
        logits, _ = _forward(self.weights_, X)
        return logits

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_logits(X), axis=-1)

    def forward_cached(self, events):
        """Hot-path forward for a single (N, 4) sample: (logits, cache)."""
        return _forward(self.weights_, events)

    def backward_input(self, events, cache, dlogits) -> np.ndarray:
        """Input gradient (N, 4) for an upstream logits gradient, given a cache."""
        return _backward_input(self.weights_, events, cache, dlogits)

    def loss_and_input_gradient(self, events, label, loss_kind="margin",
                                kappa=0.0):
        """Scalar loss and its exact (N, 4) input gradient.

        loss_kind is "margin" (hinge on the true-vs-best-other logit gap, the
        attack objective) or "cross_entropy" (the training objective). The
        polarity column of the gradient is reported but attacks never apply it.
        """
        self._check_fitted()
        events = self._check_input(events)
        logits, cache = _forward(self.weights_, events)
        if loss_kind == "margin":
            loss = losses.margin_logit_loss(logits, label, kappa)
            dlogits = losses.margin_logit_grad(logits, label, kappa)
        elif loss_kind == "cross_entropy":
            loss = losses.cross_entropy(logits, label)
            dlogits = losses.cross_entropy_grad(logits, label)
        else:
            raise ValueError(f"unknown loss_kind {loss_kind!r}")
        grad = _backward_input(self.weights_, events, cache, dlogits)
        return loss, grad


# ----------------------------------------------------------------------
# serialization: flat little-endian f64 blob + JSON sidecar
# ----------------------------------------------------------------------

def save_victim(model: EventPointNet, bin_path, meta=None) -> None:
    model._check_fitted()
    bin_path = Path(bin_path)
    flat = np.concatenate([model.weights_[k].ravel() for k in _PARAM_ORDER])
    bin_path.write_bytes(flat.astype("<f8").tobytes())
    sidecar = {
        "shapes": {k: list(model.weights_[k].shape) for k in _PARAM_ORDER},
        "n_classes": int(model.n_classes),
        "n_points": int(model.n_points_),
        "train_accuracy": model.train_accuracy_,
        "val_accuracy": model.val_accuracy_,
        "config": {k: v for k, v in model.get_params().items()},
        "meta": meta or {},
    }
    bin_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_victim(bin_path) -> EventPointNet:
    bin_path = Path(bin_path)
    sidecar = json.loads(bin_path.with_suffix(".json").read_text())
    flat = np.frombuffer(bin_path.read_bytes(), dtype="<f8").astype(np.float64)
    model = EventPointNet(**sidecar["config"])
    weights = {}
    offset = 0
    for k in _PARAM_ORDER:
        shape = tuple(sidecar["shapes"][k])
        size = int(np.prod(shape))
        weights[k] = flat[offset:offset + size].reshape(shape)
        offset += size
    if offset != flat.size:
        raise ValueError(f"{bin_path}: parameter blob size mismatch")
    model.weights_ = weights
    model.classes_ = np.arange(model.n_classes)
    model.n_points_ = int(sidecar["n_points"])
    model.train_accuracy_ = sidecar["train_accuracy"]
    model.val_accuracy_ = sidecar["val_accuracy"]
    return model
