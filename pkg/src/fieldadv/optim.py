"""Adam over named numpy arrays, updated in place."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr, betas=(0.9, 0.999), eps: float = 1e-8):
        """``lr`` is a float or a ``{name: lr}`` mapping covering every param."""
        self.params = params
        self.lr = {k: (lr[k] if isinstance(lr, dict) else float(lr)) for k in params}
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr[k] * (m / c1) / (np.sqrt(v / c2) + self.eps)
