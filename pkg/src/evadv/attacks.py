"""Gradient-based attacks on event streams.

The main attack optimizes an additive perturbation of the (x, y, t)
coordinates with a per-sample Adam optimizer, smoothing the perturbation
after every step by diffusing it over spatial and causal temporal neighbors
of the clean events. The weight between the misclassification objective and
the Chamfer distance penalty is bisected so the cheapest successful
perturbation is kept. FGSM / iterative FGSM sign baselines and a C&W-style
variant (diffusion and adaptive learning rate disabled) share the machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .diffusion import diffuse, diffusion_weights, event_velocity
from .events import EventStream
from .losses import margin_logit_grad, margin_logit_loss, total_loss
from .metrics import chamfer_distance, hausdorff_distance, l2_distance, nearest_clean
from .neighbors import build_neighbor_index
from .validation import rng_from


class AttackAborted(RuntimeError):
    """Raised when an attack hits a non-finite loss."""


# ----------------------------------------------------------------------
# optimizer pieces
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-perturbation Adam moments with bias correction."""

    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    gamma: float = 1e-8
    step: int = 0

    @classmethod
    def zeros(cls, shape, beta1=0.9, beta2=0.999, gamma=1e-8):
        return cls(np.zeros(shape), np.zeros(shape), beta1, beta2, gamma, 0)


def adam_step(state: AdamState, grad: np.ndarray, eta: float):
    """One bias-corrected Adam update; returns (new state, additive update)."""
    i = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** i)
    v_hat = v / (1.0 - state.beta2 ** i)
    update = -eta * m_hat / (np.sqrt(v_hat) + state.gamma)
    return replace(state, m=m, v=v, step=i), update


@dataclass
class SampleLrState:
    """Sample-wise learning rate, rescaled every n_interval iterations."""

    eta: float
    a: float = 0.8
    b: float = 1.2
    n_interval: int = 5


def lr_adjust(state: SampleLrState, success: bool, iteration: int) -> SampleLrState:
    """Scale eta by a on success / b on failure when iteration hits the interval."""
    if iteration % state.n_interval != 0:
        return state
    factor = state.a if success else state.b
    return replace(state, eta=state.eta * factor)


def bisect_lambda(lo: float, hi: float, lam: float, success: bool):
    """Bracket update for the distance weight.

    Success pushes lam up (heavier distance penalty, smaller perturbation),
    failure pushes it down. Returns (lo, hi, next lam).
    """
    if success:
        lo = lam
    else:
        hi = lam
    return lo, hi, (lo + hi) / 2.0


# ----------------------------------------------------------------------
# losses over streams
# ----------------------------------------------------------------------

def chamfer_loss(adv_xyt: np.ndarray, clean_xyt: np.ndarray) -> float:
    """Directed Chamfer distance, adversarial -> clean (the attack's penalty)."""
    return chamfer_distance(adv_xyt, clean_xyt)


def chamfer_loss_grad(adv_xyt: np.ndarray, clean_xyt: np.ndarray):
    """(loss, gradient w.r.t. adversarial points), nearest index held constant."""
    dists, idx = nearest_clean(adv_xyt, clean_xyt)
    n = adv_xyt.shape[0]
    diff = adv_xyt - clean_xyt[idx]
    safe = np.where(dists > 1e-12, dists, 1.0)
    grad = np.where(dists[:, None] > 1e-12, diff / (safe[:, None] * n), 0.0)
    return float(np.mean(dists)), grad


# ----------------------------------------------------------------------
# results
# ----------------------------------------------------------------------

@dataclass
class AttackResult:
    """Outcome of one attack on one sample.

    best_adv is present exactly when the attack succeeded; its events stay
    index-aligned with the clean stream (not re-sorted by t), which is what
    makes the L2 metric well defined.
    """

    method: str
    label: int
    success: bool
    best_adv: EventStream | None
    chamfer: float | None
    hausdorff: float | None
    l2: float | None
    iterations_used: int
    seed: int
    lambda_trace: list = field(default_factory=list)
    sample_index: int | None = None
    candidates: list | None = None

    def metrics_dict(self):
        return {"chamfer": self.chamfer, "hausdorff": self.hausdorff, "l2": self.l2}


def _finish_result(method, stream, label, seed, success, best_events,
                   iterations_used, lambda_trace=None, sample_index=None,
                   candidates=None):
    if not success:
        return AttackResult(method, label, False, None, None, None, None,
                            iterations_used, seed, lambda_trace or [],
                            sample_index, candidates)
    adv = EventStream(best_events, stream.sensor_size, stream.norm)
    return AttackResult(
        method, label, True, adv,
        chamfer_distance(adv.xyt, stream.xyt),
        hausdorff_distance(adv.xyt, stream.xyt),
        l2_distance(adv.xyt, stream.xyt),
        iterations_used, seed, lambda_trace or [], sample_index, candidates)


def _check_attack_input(victim, stream, label):
    if not stream.is_normalized:
        raise ValueError("attacks operate on normalized streams")
    n_classes = len(victim.classes_)
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")


# ----------------------------------------------------------------------
# MA attack and the C&W-style ablation of it
# ----------------------------------------------------------------------

class MotionAwareAttack(BaseEstimator):
    """Minimal-cost untargeted attack with perturbation diffusion.

    For each bisection step over the distance weight, an inner loop of
    ``iterations`` Adam updates minimizes margin loss + lam * Chamfer; the
    perturbation is diffused over fixed clean-stream neighbors after every
    update, and the per-sample learning rate is rescaled by the success
    outcome every ``lr_interval`` iterations. The successful iterate with the
    smallest Chamfer distance across all bisection steps wins.

    The ``diffusion`` / ``spatial`` / ``temporal`` / ``causal`` /
    ``adaptive_lr`` switches exist for ablations; with diffusion and
    adaptive_lr both off this reduces to a plain C&W-style perturbation
    attack.
    """

    method = "ma-adv"

    def __init__(self, iterations=100, binary_steps=20, eta0=1e-2,
                 lambda_lo=10.0, lambda_hi=80.0, k_neighbors=10,
                 sigma_s=0.01, sigma_t=0.1, lr_scale_success=0.8,
                 lr_scale_failure=1.2, lr_interval=5, kappa=0.0,
                 init_sigma=1e-3, beta1=0.9, beta2=0.999, gamma=1e-8,
                 diffusion=True, spatial=True, temporal=True, causal=True,
                 adaptive_lr=True):
        self.iterations = iterations
        self.binary_steps = binary_steps
        self.eta0 = eta0
        self.lambda_lo = lambda_lo
        self.lambda_hi = lambda_hi
        self.k_neighbors = k_neighbors
        self.sigma_s = sigma_s
        self.sigma_t = sigma_t
        self.lr_scale_success = lr_scale_success
        self.lr_scale_failure = lr_scale_failure
        self.lr_interval = lr_interval
        self.kappa = kappa
        self.init_sigma = init_sigma
        self.beta1 = beta1
        self.beta2 = beta2
        self.gamma = gamma
        self.diffusion = diffusion
        self.spatial = spatial
        self.temporal = temporal
        self.causal = causal
        self.adaptive_lr = adaptive_lr

    def _diffusion_enabled(self):
        return self.diffusion and (self.spatial or self.temporal)

    def _validate(self):
        if self.iterations < 1 or self.binary_steps < 1:
            raise ValueError("iterations and binary_steps must be >= 1")
        if not self.lambda_lo < self.lambda_hi:
            raise ValueError("lambda_lo must be < lambda_hi")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not 0 < self.lr_scale_success < 1 < self.lr_scale_failure:
            raise ValueError("need 0 < lr_scale_success < 1 < lr_scale_failure")

    def attack(self, victim, stream: EventStream, label: int, seed: int = 0,
               sample_index: int | None = None,
               keep_candidates: bool = False) -> AttackResult:
        """Run the full bisection attack on one sample; deterministic by seed."""
        self._validate()
        _check_attack_input(victim, stream, label)
        index = weights = None
        if self._diffusion_enabled():
            index = build_neighbor_index(stream, self.k_neighbors, causal=self.causal)
            weights = diffusion_weights(index, event_velocity(stream),
                                        self.sigma_s, self.sigma_t)

        lo, hi = float(self.lambda_lo), float(self.lambda_hi)
        lam = (lo + hi) / 2.0
        trace = []
        candidates = [] if keep_candidates else None
        best_events, best_chamfer, iterations_used = None, np.inf, 0
        for j in range(1, self.binary_steps + 1):
            events, success, dist, used = self._attack_inner(
                victim, stream, label, lam, index, weights,
                rng_from(seed, j), candidates, j)
            iterations_used += used
            trace.append({"step": j, "lam": lam, "success": bool(success),
                          "chamfer": dist if success else None})
            if success and dist < best_chamfer:
                best_events, best_chamfer = events, dist
            lo, hi, lam = bisect_lambda(lo, hi, lam, success)
        return _finish_result(self.method, stream, label, seed,
                              best_events is not None, best_events,
                              iterations_used, trace, sample_index, candidates)

    def _attack_inner(self, victim, stream, label, lam, index, weights, rng,
                      candidates, step_j):
        """Fixed-lam optimization; returns (best events, success, chamfer, iters)."""
        xyt = stream.xyt
        pol = stream.polarity[:, None]
        n = stream.n
        if self.init_sigma > 0:
            pert = rng.normal(0.0, self.init_sigma, size=(n, 3))
        else:
            pert = np.zeros((n, 3))
        adam = AdamState.zeros((n, 3), self.beta1, self.beta2, self.gamma)
        lr = SampleLrState(self.eta0, self.lr_scale_success,
                           self.lr_scale_failure, self.lr_interval)
        diffusing = self._diffusion_enabled()
        best_events, best_chamfer, success_any = None, np.inf, False
        for i in range(1, self.iterations + 1):
            pre = xyt + pert
            adv3 = np.clip(pre, 0.0, 1.0)
            inside = (pre >= 0.0) & (pre <= 1.0)
            adv_events = np.hstack([adv3, pol])
            logits, cache = victim.forward_cached(adv_events)
            cls_loss = margin_logit_loss(logits, label, self.kappa)
            dist_loss, dist_grad = chamfer_loss_grad(adv3, xyt)
            loss = total_loss(cls_loss, dist_loss, lam)
            if not np.isfinite(loss):
                raise AttackAborted(
                    f"non-finite loss at bisection step {step_j}, iteration {i} "
                    f"(cls={cls_loss}, dist={dist_loss}, lam={lam})")
            dz = margin_logit_grad(logits, label, self.kappa)
            cls_grad = victim.backward_input(adv_events, cache, dz)[:, :3]
            grad = (cls_grad + lam * dist_grad) * inside
            adam, update = adam_step(adam, grad, lr.eta)
            pert = pert + update
            if diffusing:
                pert = diffuse(pert, index, weights, self.spatial, self.temporal)
            if i % self.lr_interval == 0:
                adv_now = np.hstack([np.clip(xyt + pert, 0.0, 1.0), pol])
                success = int(np.argmax(victim.forward_cached(adv_now)[0])) != label
                if success:
                    success_any = True
                    dist_now = chamfer_distance(adv_now[:, :3], xyt)
                    if candidates is not None:
                        candidates.append((step_j, i, dist_now, adv_now.copy()))
                    if dist_now < best_chamfer:
                        best_events, best_chamfer = adv_now, dist_now
                if self.adaptive_lr:
                    lr = lr_adjust(lr, success, i)
        return best_events, success_any, best_chamfer, self.iterations


class CwAttack(MotionAwareAttack):
    """C&W-style baseline: the same driver with both novel switches off."""

    method = "cw"

    def __init__(self, iterations=100, binary_steps=20, eta0=1e-2,
                 lambda_lo=10.0, lambda_hi=80.0, lr_interval=5, kappa=0.0,
                 init_sigma=1e-3, beta1=0.9, beta2=0.999, gamma=1e-8):
        super().__init__(iterations=iterations, binary_steps=binary_steps,
                         eta0=eta0, lambda_lo=lambda_lo, lambda_hi=lambda_hi,
                         lr_interval=lr_interval, kappa=kappa,
                         init_sigma=init_sigma, beta1=beta1, beta2=beta2,
                         gamma=gamma, diffusion=False, adaptive_lr=False)


# ----------------------------------------------------------------------
# sign-step baselines
# ----------------------------------------------------------------------

def _sign_step(victim, events, label, step_size):
    """One FGSM step on (x, y, t): clip(coords + step * sign(grad)); sign(0) = 0."""
    _, grad = victim.loss_and_input_gradient(events, label, "cross_entropy")
    stepped = np.clip(events[:, :3] + step_size * np.sign(grad[:, :3]), 0.0, 1.0)
    out = events.copy()
    out[:, :3] = stepped
    return out


class FgsmAttack(BaseEstimator):
    """Single fixed-magnitude step along the sign of the cross-entropy gradient."""

    method = "fgsm"

    def __init__(self, epsilon=1.0):
        self.epsilon = epsilon

    def attack(self, victim, stream: EventStream, label: int, seed: int = 0,
               sample_index: int | None = None) -> AttackResult:
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        _check_attack_input(victim, stream, label)
        adv_events = _sign_step(victim, stream.events, label, self.epsilon)
        success = int(np.argmax(victim.predict_logits(adv_events))) != label
        return _finish_result(self.method, stream, label, seed, success,
                              adv_events, 1, sample_index=sample_index)


class IfgsmAttack(BaseEstimator):
    """Iterative FGSM: ``steps`` sign steps of epsilon / steps each.

    Success is checked after every step and the earliest successful iterate
    is returned, so the budget actually spent can be below epsilon.
    """

    method = "ifgsm"

    def __init__(self, epsilon=1.0, steps=3):
        self.epsilon = epsilon
        self.steps = steps

    def attack(self, victim, stream: EventStream, label: int, seed: int = 0,
               sample_index: int | None = None) -> AttackResult:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        _check_attack_input(victim, stream, label)
        step_size = self.epsilon / self.steps
        events = stream.events
        for i in range(1, self.steps + 1):
            events = _sign_step(victim, events, label, step_size)
            if int(np.argmax(victim.predict_logits(events))) != label:
                return _finish_result(self.method, stream, label, seed, True,
                                      events, i, sample_index=sample_index)
        return _finish_result(self.method, stream, label, seed, False, None,
                              self.steps, sample_index=sample_index)
