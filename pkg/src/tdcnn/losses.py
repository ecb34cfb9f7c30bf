"""Focal loss (cross-entropy scaled by a (1-p)^gamma focusing factor) and Adam.

The loss gradient is taken directly with respect to the logits, chaining
analytically through the softmax, so the softmax layer itself never appears
in the backward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericInstabilityError, ShapeMismatchError

_LOG_CLAMP = 1e-12  # floor for probabilities entering the log
_ROW_SUM_TOL = 1e-6


@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    class_weights: np.ndarray | None = None  # per-class positive reals; None = all ones

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.class_weights is not None:
            self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
            if np.any(self.class_weights <= 0):
                raise ValueError("class weights must be positive")


def _validate_focal_inputs(probs: np.ndarray, one_hot: np.ndarray, cfg: FocalLossConfig):
    if probs.shape != one_hot.shape or probs.ndim != 2:
        raise ShapeMismatchError(
            f"probs {probs.shape} and one-hot targets {one_hot.shape} must be equal rank-2"
        )
    is01 = (one_hot == 0) | (one_hot == 1)
    if not (is01.all() and np.array_equal(one_hot.sum(axis=1), np.ones(len(one_hot)))):
        raise ValueError("targets must be one-hot rows (exactly one 1 per row)")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
        raise ValueError("probs rows must be valid probability vectors (sum to 1)")
    if cfg.class_weights is not None and len(cfg.class_weights) != probs.shape[1]:
        raise ShapeMismatchError(
            f"{len(cfg.class_weights)} class weights for {probs.shape[1]} classes"
        )


def focal_loss(
    probs: np.ndarray, one_hot: np.ndarray, cfg: FocalLossConfig
) -> tuple[float, np.ndarray]:
    """Mean focal loss over the batch and its exact gradient w.r.t. the logits.

    Per sample with true class k: loss = -w_k * (1 - p_k)^gamma * ln(p_k),
    p_k clamped to >= 1e-12 before the log. gamma = 0 recovers weighted
    cross-entropy.
    """
    _validate_focal_inputs(probs, one_hot, cfg)
    n = probs.shape[0]
    k = np.argmax(one_hot, axis=1)
    p = probs[np.arange(n), k]
    pc = np.maximum(p, probs.dtype.type(_LOG_CLAMP))
    log_pc = np.log(pc)
    w = (
        np.ones(n, dtype=probs.dtype)
        if cfg.class_weights is None
        else cfg.class_weights[k].astype(probs.dtype)
    )
    q = 1.0 - p
    focus = q**cfg.gamma if cfg.gamma != 0 else np.ones_like(p)
    loss = float(np.mean(-w * focus * log_pc))

    # dL/dp = w * (gamma * q^(gamma-1) * ln p  -  q^gamma / p); the first term
    # vanishes both for gamma = 0 and at p = 1 (where q^(gamma-1) can blow up).
    dldp = -w * focus / pc
    if cfg.gamma != 0:
        pos = q > 0
        term = np.zeros_like(p)
        term[pos] = cfg.gamma * q[pos] ** (cfg.gamma - 1.0) * log_pc[pos]
        dldp = w * term + dldp
    # chain through softmax: dp_k/dz_i = p_k * (delta_ik - p_i)
    coef = (dldp * p / n)[:, None]
    grad_logits = coef * (one_hot.astype(probs.dtype) - probs)
    return loss, grad_logits


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One in-place Adam update over a name -> tensor parameter dict.

    Moment tensors are created lazily (zeros) on first use. A non-finite
    gradient aborts the whole step before any parameter is touched.
    """
    if set(params) != set(grads):
        raise ShapeMismatchError(
            f"parameter/gradient name sets differ: {sorted(set(params) ^ set(grads))}"
        )
    for name_, g in grads.items():
        if g.shape != params[name_].shape:
            raise ShapeMismatchError(
                f"gradient shape {g.shape} != parameter shape {params[name_].shape} for {name_}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericInstabilityError(f"non-finite gradient in {name_}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name_, p in params.items():
        g = grads[name_]
        m = state.m.setdefault(name_, np.zeros_like(p))
        v = state.v.setdefault(name_, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
