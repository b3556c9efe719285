"""Spectral and pixel losses against direct-DFT and Parseval oracles."""

import numpy as np
import pytest

from scancast import tensor as T
from scancast.errors import ConfigurationError, DimensionError, DomainError
from scancast.losses import (LossReport, combined_loss,
                             frequency_weighted_spectral_loss,
                             high_frequency_weight_map, mse_loss, spectral_loss)
from scancast.tensor import Tensor


def direct_dft2(x):
    """Quadratic-time 2-D DFT used only as an oracle."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for ky in range(h):
        for kx in range(w):
            acc = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * np.exp(-2j * np.pi * (ky * m / h + kx * n / w))
            out[ky, kx] = acc
    return out


def test_zero_residual_gives_zero():
    rng = np.random.default_rng(0)
    x = rng.random((3, 8, 8))
    loss = spectral_loss(Tensor(x), Tensor(x.copy()))
    assert float(loss.data) == 0.0
    assert float(mse_loss(Tensor(x), Tensor(x.copy())).data) == 0.0


def test_single_pixel_delta():
    # a one-pixel residual of size delta costs exactly H*W*delta^2: the DFT of
    # an impulse has |F|^2 = delta^2 at every one of the H*W bins
    h, w = 8, 16
    for delta in (0.5, -2.0, 3.25):
        pred = np.zeros((1, h, w))
        pred[0, 3, 5] = delta
        loss = spectral_loss(Tensor(pred), Tensor(np.zeros((1, h, w))))
        assert abs(float(loss.data) - h * w * delta * delta) < 1e-9 * h * w * delta * delta


def test_parseval_relation_random_pairs():
    # spectral == H*W * mean-over-frames(per-frame summed squared residual)
    #          == (H*W)^2 * elementwise MSE
    rng = np.random.default_rng(1)
    for trial in range(50):
        h = 2 ** rng.integers(0, 7)
        w = 2 ** rng.integers(0, 7)
        f = int(rng.integers(1, 5))
        pred = rng.standard_normal((f, h, w))
        truth = rng.standard_normal((f, h, w))
        loss = float(spectral_loss(Tensor(pred), Tensor(truth)).data)
        per_frame_sse = ((pred - truth) ** 2).reshape(f, -1).sum(axis=1)
        expect = h * w * per_frame_sse.mean()
        assert abs(loss - expect) <= 1e-12 * max(1.0, abs(expect))
        mse = float(mse_loss(Tensor(pred), Tensor(truth)).data)
        assert abs(loss - (h * w) ** 2 * mse) <= 1e-10 * max(1.0, abs(loss))


def test_uniform_weight_matches_unweighted():
    rng = np.random.default_rng(2)
    pred = rng.standard_normal((2, 3, 8, 8))
    truth = rng.standard_normal((2, 3, 8, 8))
    plain = float(spectral_loss(Tensor(pred), Tensor(truth)).data)
    ones = np.ones((8, 8))
    weighted = float(frequency_weighted_spectral_loss(Tensor(pred), Tensor(truth), ones).data)
    assert abs(plain - weighted) <= 1e-12 * max(1.0, abs(plain))


def test_weighted_loss_against_direct_dft():
    rng = np.random.default_rng(3)
    pred = rng.standard_normal((2, 8, 4))
    truth = rng.standard_normal((2, 8, 4))
    weight = rng.random((8, 4)) + 0.1
    got = float(frequency_weighted_spectral_loss(Tensor(pred), Tensor(truth), weight).data)
    acc = 0.0
    for f in range(2):
        spec = direct_dft2(pred[f] - truth[f])
        acc += float((weight * (spec.real ** 2 + spec.imag ** 2)).sum())
    expect = acc / 2
    assert abs(got - expect) <= 1e-8 * max(1.0, abs(expect))


def test_zero_dc_weight_ignores_constant_offset():
    rng = np.random.default_rng(4)
    base = rng.standard_normal((1, 8, 8))
    weight = np.ones((8, 8))
    weight[0, 0] = 0.0  # bin (0, 0) is the DC component
    shifted = Tensor(base + 5.0)
    loss = frequency_weighted_spectral_loss(shifted, Tensor(base), weight)
    assert abs(float(loss.data)) < 1e-16


def test_spectral_gradient():
    rng = np.random.default_rng(5)
    pred = Tensor(rng.standard_normal((2, 4, 8)), requires_grad=True)
    truth = Tensor(rng.standard_normal((2, 4, 8)), requires_grad=True)
    err = T.grad_check(lambda p, t: spectral_loss(p, t), [pred, truth])
    assert err < 1e-6


def test_weighted_spectral_gradient():
    rng = np.random.default_rng(6)
    weight = high_frequency_weight_map(4, 4)
    pred = Tensor(rng.standard_normal((3, 4, 4)), requires_grad=True)
    truth = Tensor(rng.standard_normal((3, 4, 4)), requires_grad=True)
    err = T.grad_check(
        lambda p, t: frequency_weighted_spectral_loss(p, t, weight), [pred, truth]
    )
    assert err < 1e-6


def test_combined_gradient():
    rng = np.random.default_rng(7)
    pred = Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
    truth = Tensor(rng.standard_normal((2, 4, 4)))
    err = T.grad_check(
        lambda p: combined_loss(p, truth, lambda_spec=0.7, lambda_mse=2.0).total, [pred]
    )
    assert err < 1e-6


def test_gradient_antisymmetry():
    # d(loss)/d(truth) is exactly -d(loss)/d(pred), bit for bit
    rng = np.random.default_rng(8)
    pred = Tensor(rng.standard_normal((2, 8, 8)), requires_grad=True)
    truth = Tensor(rng.standard_normal((2, 8, 8)), requires_grad=True)
    with T.Tape() as tape:
        loss = spectral_loss(pred, truth)
    tape.backward(loss)
    assert np.array_equal(truth.grad, -pred.grad)


def test_loss_report_breakdown():
    rng = np.random.default_rng(9)
    pred = Tensor(rng.standard_normal((1, 8, 8)))
    truth = Tensor(rng.standard_normal((1, 8, 8)))
    rep = combined_loss(pred, truth, lambda_spec=0.5, lambda_mse=3.0)
    assert set(rep.components) == {"spectral", "mse"}
    recon = sum(rep.weights[k] * rep.components[k] for k in rep.components)
    assert abs(float(rep.total.data) - recon) <= 1e-12 * max(1.0, abs(recon))
    assert "spectral" in repr(rep)


def test_combined_loss_single_terms():
    rng = np.random.default_rng(10)
    pred = Tensor(rng.standard_normal((1, 4, 4)))
    truth = Tensor(rng.standard_normal((1, 4, 4)))
    spec_only = combined_loss(pred, truth, lambda_spec=1.0, lambda_mse=0.0)
    assert set(spec_only.components) == {"spectral"}
    assert float(spec_only.total.data) == pytest.approx(
        float(spectral_loss(pred, truth).data), rel=1e-12)
    mse_only = combined_loss(pred, truth, lambda_spec=0.0, lambda_mse=1.0)
    assert set(mse_only.components) == {"mse"}


def test_loss_configuration_errors():
    pred = Tensor(np.zeros((1, 4, 4)))
    truth = Tensor(np.zeros((1, 4, 4)))
    with pytest.raises(ConfigurationError):
        combined_loss(pred, truth, lambda_spec=0.0, lambda_mse=0.0)
    with pytest.raises(ConfigurationError):
        combined_loss(pred, truth, lambda_spec=-1.0)
    with pytest.raises(ConfigurationError):
        frequency_weighted_spectral_loss(pred, truth, None)


def test_loss_input_validation():
    with pytest.raises(DimensionError):
        spectral_loss(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 4, 4))))
    with pytest.raises(DimensionError):
        spectral_loss(Tensor(np.zeros(8)), Tensor(np.zeros(8)))
    with pytest.raises(DimensionError):
        # 6 is not a power of two
        spectral_loss(Tensor(np.zeros((1, 6, 4))), Tensor(np.zeros((1, 6, 4))))
    with pytest.raises(DimensionError):
        frequency_weighted_spectral_loss(
            Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 4, 4))), np.ones((8, 8)))
    with pytest.raises(DomainError):
        frequency_weighted_spectral_loss(
            Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 4, 4))), -np.ones((4, 4)))


def test_high_frequency_weight_map_shape():
    w = high_frequency_weight_map(8, 16)
    assert w.shape == (8, 16)
    assert w[0, 0] == 1.0  # DC untouched
    assert abs(w[4, 8] - 2.0) < 1e-12  # Nyquist corner doubled
    assert np.all(w >= 1.0) and np.all(w <= 2.0)
    # wrap symmetry: k and -k carry the same weight
    assert np.allclose(w, np.roll(np.flip(w, axis=(0, 1)), 1, axis=(0, 1)))
