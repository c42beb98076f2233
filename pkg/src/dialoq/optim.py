"""Adaptive-moment gradient updates for EncoderParams."""

from __future__ import annotations

import numpy as np

from .encoder import EncoderParams


class AdamState:
    def __init__(self, params: EncoderParams, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}


def optimizer_step(params: EncoderParams, opt_state: AdamState, lr: float) -> None:
    """One Adam update in place from each tensor's .grad; rejects NaN gradients."""
    for name, t in params.items():
        g = t.grad
        if g is None:
            g = np.zeros_like(t.data)
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in tensor {name!r}")
    opt_state.step_count += 1
    b1, b2 = opt_state.beta1, opt_state.beta2
    t_ = opt_state.step_count
    bc1 = 1.0 - b1 ** t_
    bc2 = 1.0 - b2 ** t_
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        m = opt_state.m[name]
        v = opt_state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        t.data -= (lr * mhat / (np.sqrt(vhat) + opt_state.eps)).astype(t.data.dtype)
