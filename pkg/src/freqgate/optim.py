"""Optimizers with decoupled weight decay.

Decay multiplies weights by (1 - lr*wd) directly each step, independent of
the gradient, so a zero loss shrinks every parameter by exactly that factor
and lr = 0 is a no-op.
"""

from __future__ import annotations

import numpy as np


class SGD:
    """Gradient descent with classical momentum."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        shrink = 1.0 - self.lr * self.weight_decay
        for name, p in self.params.items():
            g = p.grad
            v = self.velocity[name]
            if g is not None:
                v *= self.momentum
                v += g
            else:
                v *= self.momentum
            p.data = p.data * p.data.dtype.type(shrink) - p.data.dtype.type(self.lr) * v.astype(p.data.dtype)

    def state_arrays(self):
        return {f"opt.momentum/{k}": v for k, v in self.velocity.items()}

    def load_state(self, arrays, prefix="opt.momentum/"):
        for k in self.velocity:
            key = prefix + k
            if key in arrays:
                self.velocity[k] = arrays[key].astype(self.velocity[k].dtype).reshape(
                    self.velocity[k].shape
                )


class Adam:
    """Adaptive moments option; decay stays decoupled as in SGD."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        shrink = 1.0 - self.lr * self.weight_decay
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data * p.data.dtype.type(shrink) - p.data.dtype.type(self.lr) * update.astype(p.data.dtype)

    def state_arrays(self):
        out = {f"opt.m/{k}": v for k, v in self.m.items()}
        out.update({f"opt.v/{k}": v for k, v in self.v.items()})
        out["opt.t"] = np.array([self.t], dtype=np.float32)
        return out

    def load_state(self, arrays):
        for k in self.m:
            if f"opt.m/{k}" in arrays:
                self.m[k] = arrays[f"opt.m/{k}"].astype(self.m[k].dtype).reshape(self.m[k].shape)
            if f"opt.v/{k}" in arrays:
                self.v[k] = arrays[f"opt.v/{k}"].astype(self.v[k].dtype).reshape(self.v[k].shape)
        if "opt.t" in arrays:
            self.t = int(arrays["opt.t"][0])


def make_optimizer(kind, params, lr, momentum, weight_decay):
    if kind == "sgd":
        return SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(params, lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r}")
