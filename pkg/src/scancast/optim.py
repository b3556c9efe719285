"""Adam with bias correction and a cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, ContractError
from .tensor import Tensor

__all__ = ["Adam", "cosine_lr"]


def cosine_lr(epoch: int, n_epochs: int, base_lr: float) -> float:
    """Cosine decay from base_lr at epoch 0 to 0 at the final epoch.

    lr(e) = 0.5 * base_lr * (1 + cos(pi * e / (n_epochs - 1))), so the first
    epoch runs at exactly base_lr and the last at exactly 0.  A one-epoch
    schedule runs entirely at base_lr.
    """
    if n_epochs < 1:
        raise ConfigurationError(f"n_epochs must be >= 1, got {n_epochs}")
    if not 0 <= epoch < n_epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {n_epochs})")
    if n_epochs == 1:
        return base_lr
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * epoch / (n_epochs - 1)))


class Adam:
    """First/second-moment adaptive updates over a fixed parameter list.

    The parameter list order is frozen at construction; updates walk it in
    that order, so two runs fed identical gradients produce identical
    parameters bit for bit.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigurationError(f"betas must be in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        params = list(params)
        if not params:
            raise ConfigurationError("empty parameter list")
        for p in params:
            if not isinstance(p, Tensor) or not p.requires_grad:
                raise ContractError("Adam expects gradient-bearing tensors")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def zero_grads(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """Apply one update using each parameter's .grad; missing gradients
        are treated as zero (the moments still decay)."""
        if lr is None:
            lr = self.lr
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / bc1
            v_hat = self._v[i] / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
