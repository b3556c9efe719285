"""Training objectives: spectral, frequency-weighted spectral, pixel MSE.

The spectral residual loss is the mean, over frames, of the summed squared
modulus of the DFT of (pred - truth).  With the unnormalized forward transform
this equals H*W times the pixel MSE summed per frame (Parseval), so the plain
spectral loss is an exactly rescaled MSE; the frequency-weighted variant is
the one that changes the optimization geometry.  Gradients are analytic:

    d/d(residual) [ sum_k w_k |F(r)|_k^2 ] = 2 * H*W * Re(ifft2(w * F(r)))

so the loss is a single fused tape operation per call, and the gradient with
respect to the truth is exactly the negated prediction gradient.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, DimensionError, DomainError
from .fft import _check_pow2, _fft_last_axis
from .tensor import Tensor, record_op

__all__ = [
    "spectral_loss",
    "frequency_weighted_spectral_loss",
    "mse_loss",
    "combined_loss",
    "high_frequency_weight_map",
    "LossReport",
]


def _fft2_frames(frames: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT over the last two axes of a real (F, H, W) stack."""
    z = frames.astype(np.complex128)
    z = _fft_last_axis(z)
    return _fft_last_axis(z.swapaxes(-1, -2)).swapaxes(-1, -2)


def _ifft2_frames(z: np.ndarray) -> np.ndarray:
    h, w = z.shape[-2:]
    zc = np.conj(z)
    zc = _fft_last_axis(zc)
    zc = _fft_last_axis(zc.swapaxes(-1, -2)).swapaxes(-1, -2)
    return np.conj(zc) / (h * w)


def _check_pair(pred: Tensor, truth: Tensor) -> tuple[int, int, int]:
    if pred.shape != truth.shape:
        raise DimensionError(f"pred/truth shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim < 2:
        raise DimensionError("loss inputs must be at least (H, W)")
    h, w = pred.shape[-2:]
    _check_pow2((h, w))
    n_frames = int(np.prod(pred.shape[:-2])) if pred.ndim > 2 else 1
    return n_frames, h, w


def _weighted_spectral(pred: Tensor, truth: Tensor, weight: np.ndarray | None) -> Tensor:
    n_frames, h, w = _check_pair(pred, truth)
    if weight is not None:
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (h, w):
            raise DimensionError(f"weight map must be {(h, w)}, got {weight.shape}")
        if np.any(weight < 0.0):
            raise DomainError("weight map entries must be non-negative")
    res = (pred.data - truth.data).reshape(n_frames, h, w)
    spec = _fft2_frames(res)
    power = spec.real * spec.real + spec.imag * spec.imag
    if weight is None:
        total = power.sum()
    else:
        total = (power * weight).sum()
    out = np.asarray(total / n_frames)

    def backward(g):
        ws = spec if weight is None else spec * weight
        grad = (2.0 * h * w / n_frames) * _ifft2_frames(ws).real
        grad = (float(g) * grad).reshape(pred.shape)
        return grad, -grad

    return record_op(out, (pred, truth), backward)


def spectral_loss(pred: Tensor, truth: Tensor) -> Tensor:
    """Mean over frames of sum_k |F(pred - truth)|_k^2 (unweighted)."""
    return _weighted_spectral(pred, truth, None)


def frequency_weighted_spectral_loss(pred: Tensor, truth: Tensor, weight_map) -> Tensor:
    """Spectral loss with a non-negative per-bin weight map of shape (H, W)."""
    if weight_map is None:
        raise ConfigurationError("weight_map is required; use spectral_loss for uniform weights")
    return _weighted_spectral(pred, truth, weight_map)


def mse_loss(pred: Tensor, truth: Tensor) -> Tensor:
    _check_pair(pred, truth)
    return T.tmean(T.square(T.sub(pred, truth)))


def high_frequency_weight_map(height: int, width: int) -> np.ndarray:
    """Radial weight 1 + r/r_max with wrap-aware frequency distance r.

    DC keeps weight 1.0; the highest representable frequency gets 2.0.
    """
    ky = np.minimum(np.arange(height), height - np.arange(height))
    kx = np.minimum(np.arange(width), width - np.arange(width))
    r = np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)
    r_max = np.sqrt((height // 2) ** 2 + (width // 2) ** 2)
    return 1.0 + r / r_max


class LossReport:
    """A combined objective: scalar total plus per-component breakdown.

    Invariant: total == sum(weights[name] * components[name]) to within 1e-12.
    """

    def __init__(self, total: Tensor, components: dict[str, float], weights: dict[str, float]):
        self.total = total
        self.components = components
        self.weights = weights
        combined = sum(weights[k] * components[k] for k in components)
        if abs(float(total.data) - combined) > 1e-12 * max(1.0, abs(combined)):
            raise ContractError(
                f"loss total {float(total.data)!r} != weighted component sum {combined!r}"
            )

    def __repr__(self):
        parts = ", ".join(f"{k}={v:.6g}" for k, v in self.components.items())
        return f"LossReport(total={float(self.total.data):.6g}, {parts})"


def combined_loss(
    pred: Tensor,
    truth: Tensor,
    lambda_spec: float = 1.0,
    lambda_mse: float = 0.0,
    weight_map=None,
) -> LossReport:
    """Weighted sum of the spectral and pixel-MSE objectives."""
    if lambda_spec < 0.0 or lambda_mse < 0.0:
        raise ConfigurationError("loss weights must be non-negative")
    if lambda_spec == 0.0 and lambda_mse == 0.0:
        raise ConfigurationError("at least one loss weight must be positive")
    components: dict[str, float] = {}
    weights: dict[str, float] = {}
    total: Tensor | None = None
    if lambda_spec > 0.0:
        spec = (
            spectral_loss(pred, truth)
            if weight_map is None
            else frequency_weighted_spectral_loss(pred, truth, weight_map)
        )
        components["spectral"] = float(spec.data)
        weights["spectral"] = lambda_spec
        total = T.mul(spec, _scalar(lambda_spec))
    if lambda_mse > 0.0:
        mse = mse_loss(pred, truth)
        components["mse"] = float(mse.data)
        weights["mse"] = lambda_mse
        term = T.mul(mse, _scalar(lambda_mse))
        total = term if total is None else T.add(total, term)
    return LossReport(total, components, weights)


def _scalar(v: float) -> Tensor:
    return Tensor(np.asarray(v, dtype=np.float64))
