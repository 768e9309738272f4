"""Adam optimizer over the model's named parameters."""

from __future__ import annotations

import numpy as np

from .model import SaeModel

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


class AdamState:
    def __init__(self, model: SaeModel):
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in model.named_params()}
        self.v = {k: np.zeros_like(v) for k, v in model.named_params()}


def adam_step(model: SaeModel, grads: dict[str, np.ndarray], state: AdamState, lr: float):
    """One bias-corrected Adam update, applied in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    for key, param in model.named_params():
        g = grads.get(key)
        if g is None:
            continue
        m = state.m[key]
        v = state.v[key]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + EPSILON)
    return model, state
