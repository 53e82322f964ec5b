"""Scalar losses over logits and their gradients."""

from __future__ import annotations

import numpy as np


def cross_entropy(logits: np.ndarray, label: int) -> float:
    z = logits - logits.max()
    return float(np.log(np.exp(z).sum()) - z[label])


def cross_entropy_grad(logits: np.ndarray, label: int) -> np.ndarray:
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    p[label] -= 1.0
    return p


def margin_logit_loss(logits: np.ndarray, label: int, kappa: float = 0.0) -> float:
    """Hinge on the gap between the true-class logit and the best other logit.

    max(z[label] - max_{c != label} z[c] + kappa, 0): zero exactly when some
    other class wins by at least kappa, so minimizing it drives untargeted
    misclassification.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] < 2:
        raise ValueError("margin loss needs at least two classes")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    other = np.delete(logits, label)
    return float(max(logits[label] - other.max() + kappa, 0.0))


def margin_logit_grad(logits: np.ndarray, label: int, kappa: float = 0.0) -> np.ndarray:
    """Gradient of margin_logit_loss w.r.t. the logits (zero in the clamped region)."""
    logits = np.asarray(logits, dtype=np.float64)
    grad = np.zeros_like(logits)
    other = np.delete(logits, label)
    if logits[label] - other.max() + kappa <= 0.0:
        return grad
    runner = np.argmax(np.where(np.arange(logits.size) == label, -np.inf, logits))
    grad[label] = 1.0
    grad[runner] = -1.0
    return grad


def total_loss(cls_loss: float, dist_loss: float, lam: float) -> float:
    """Weighted attack objective: classification term plus lam * distance term."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return cls_loss + lam * dist_loss
