"""Adam with bias correction.

State lives outside the parameters so the same store can be driven by a
fresh optimizer (e.g. when fine-tuning resumes). Updates run in sorted
parameter-name order for reproducibility.
"""

from __future__ import annotations

import numpy as np

from nextloc.numcore.params import ParameterStore


class AdamState:
    def __init__(
        self,
        store: ParameterStore,
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}


def adam_step(store: ParameterStore, state: AdamState) -> None:
    """Apply one Adam update to every parameter, then clear gradients.

    Every parameter must carry a gradient (backward() with params= fills in
    zeros for unreachable ones).
    """
    for name, t in store.items():
        if t.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
        if t.grad.shape != t.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {t.grad.shape} != parameter shape {t.data.shape} for {name!r}"
            )
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step_count
    bias2 = 1.0 - b2 ** state.step_count
    for name, t in store.items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        t.data = t.data - state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        t.grad = np.zeros_like(t.data)
