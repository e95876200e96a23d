"""Optimizers over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = np.asarray(state["m"][k]).copy()
            self.v[k] = np.asarray(state["v"][k]).copy()


class SGD:
    """SGD with momentum and an externally supplied per-epoch learning rate."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01, momentum: float = 0.9):
        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.vel = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.vel[k] = self.momentum * self.vel[k] + p.grad
            p.data = p.data - self.lr * self.vel[k]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
