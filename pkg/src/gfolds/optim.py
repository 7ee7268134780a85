"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .errors import IntegrityError
from .params import ParamStore


class AdamW:
    """Per-parameter first/second moment accumulators plus a step counter.

    Weight decay is applied to the parameter directly (decoupled), never
    through the gradient; moment estimates are bias-corrected.
    """

    def __init__(self, params: ParamStore, weight_decay: float = 1e-5,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.weight_decay = float(weight_decay)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        for name, t in params.trainable():
            self.m[name] = np.zeros_like(t.data)
            self.v[name] = np.zeros_like(t.data)

    def step(self, lr: float):
        """One update over every trainable parameter; requires populated grads."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.trainable():
            if p.grad is None:
                raise IntegrityError(f"parameter {name!r} has no gradient")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay != 0.0:
                update = update + self.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype)

    def zero_grad(self):
        self.params.zero_grad()

    # -- checkpoint support ---------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"optimizer/m/{name}"] = self.m[name]
            out[f"optimizer/v/{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step_count: int):
        for name in self.m:
            m_key, v_key = f"optimizer/m/{name}", f"optimizer/v/{name}"
            if m_key not in tensors or v_key not in tensors:
                raise IntegrityError(f"checkpoint is missing optimizer state for {name!r}")
            if tensors[m_key].shape != self.m[name].shape:
                raise IntegrityError(f"optimizer state shape mismatch for {name!r}")
            self.m[name] = tensors[m_key].copy()
            self.v[name] = tensors[v_key].copy()
        self.step_count = int(step_count)
