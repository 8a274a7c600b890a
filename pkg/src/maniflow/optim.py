"""Adam optimizer over a flat parameter vector."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteGradError, ShapeError


class Adam:
    """Standard Adam with bias correction.

    Defaults: lr=2e-4 (training setup), beta1=0.9, beta2=0.999, eps=1e-8
    (standard moment defaults).
    """

    def __init__(self, n_params: int, lr: float = 2e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """One update; returns the new parameter vector (input not mutated)."""
        if params.shape != self.m.shape or grads.shape != self.m.shape:
            raise ShapeError("adam: parameter/gradient length mismatch")
        if not np.all(np.isfinite(grads)):
            raise NonFiniteGradError("non-finite gradient passed to Adam")
        self.step_count += 1
        t = self.step_count
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads**2
        m_hat = self.m / (1.0 - self.beta1**t)
        v_hat = self.v / (1.0 - self.beta2**t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
