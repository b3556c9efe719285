"""Motion estimation and advection extrapolation baselines."""

import numpy as np
import pytest

from scancast.errors import DimensionError, DomainError
from scancast.flow import (FlowField, bilinear_sample_periodic, estimate_motion,
                           extrapolate, persistence, semi_lagrangian_step)


def blob_field(h, w, cy, cx, sigma=3.0, rng=None):
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = np.minimum(np.abs(yy - cy), h - np.abs(yy - cy))
    dx = np.minimum(np.abs(xx - cx), w - np.abs(xx - cx))
    field = 40.0 * np.exp(-(dy ** 2 + dx ** 2) / (2 * sigma ** 2))
    if rng is not None:
        field += rng.normal(0, 0.5, size=field.shape)
    return field


def test_bilinear_integer_coordinates_exact():
    rng = np.random.default_rng(0)
    field = rng.random((8, 12))
    yy, xx = np.meshgrid(np.arange(8.0), np.arange(12.0), indexing="ij")
    assert np.array_equal(bilinear_sample_periodic(field, yy, xx), field)
    # wrap: coordinate -1 equals coordinate n-1
    got = bilinear_sample_periodic(field, np.array([-1.0]), np.array([0.0]))
    assert got[0] == field[7, 0]
    got = bilinear_sample_periodic(field, np.array([0.0]), np.array([12.5]))
    assert got[0] == pytest.approx(0.5 * (field[0, 0] + field[0, 1]))


def test_bilinear_interpolates_midpoints():
    field = np.array([[0.0, 4.0], [8.0, 12.0]])
    got = bilinear_sample_periodic(field, np.array([0.5]), np.array([0.5]))
    assert got[0] == pytest.approx(6.0)


def test_semi_lagrangian_matches_roll_for_integer_shift():
    rng = np.random.default_rng(1)
    field = rng.random((16, 16))
    for sy, sx in ((1, 0), (0, 1), (2, 3), (-1, 2)):
        stepped = semi_lagrangian_step(field, u=float(sx), v=float(sy))
        rolled = np.roll(field, shift=(sy, sx), axis=(0, 1))
        assert np.allclose(stepped, rolled, atol=1e-12)


def test_semi_lagrangian_conserves_mass():
    rng = np.random.default_rng(2)
    field = rng.random((32, 32))
    u = rng.normal(0, 1, size=(32, 32))
    v = np.broadcast_to(rng.normal(0, 1, size=(32, 1)), (32, 32))
    # any velocity field: bilinear weights at each departure point sum to 1,
    # but only divergence-free fields conserve mass; check a row-constant one
    u_shear = np.broadcast_to(rng.normal(0, 1, size=(32, 1)), (32, 32)).copy()
    stepped = semi_lagrangian_step(field, u_shear, 0.7)
    assert abs(stepped.sum() - field.sum()) / field.sum() < 1e-12


def test_flow_field_validation():
    with pytest.raises(DimensionError):
        FlowField(u=np.zeros((4, 4)), v=np.zeros((4, 5)))
    with pytest.raises(DimensionError):
        FlowField(u=np.zeros(4), v=np.zeros(4))
    with pytest.raises(DomainError):
        FlowField(u=np.full((4, 4), np.nan), v=np.zeros((4, 4)))
    f = FlowField(u=np.ones((4, 4)), v=np.zeros((4, 4)))
    assert not f.low_confidence


def test_motion_recovery_uniform_translation():
    rng = np.random.default_rng(3)
    a = blob_field(32, 32, 16.0, 12.0, rng=rng) + blob_field(32, 32, 6.0, 25.0)
    for (sy, sx) in ((0, 2), (1, 0), (2, 2), (0, -3)):
        b = np.roll(a, shift=(sy, sx), axis=(0, 1))
        flow = estimate_motion(a, b)
        assert not flow.low_confidence
        assert abs(np.median(flow.u) - sx) <= 0.5
        assert abs(np.median(flow.v) - sy) <= 0.5


def test_motion_antisymmetry():
    rng = np.random.default_rng(4)
    a = blob_field(32, 32, 10.0, 10.0, rng=rng)
    b = np.roll(a, shift=(0, 3), axis=(0, 1))
    fwd = estimate_motion(a, b)
    bwd = estimate_motion(b, a)
    assert abs(np.median(fwd.u) + np.median(bwd.u)) <= 1.0


def test_motion_degenerate_inputs():
    # identical frames: zero flow, confident
    a = blob_field(32, 32, 16.0, 16.0)
    same = estimate_motion(a, a.copy())
    assert np.allclose(same.u, 0.0) and np.allclose(same.v, 0.0)
    assert not same.low_confidence
    # featureless frames: zero flow, flagged
    flat = estimate_motion(np.zeros((32, 32)), np.zeros((32, 32)))
    assert np.array_equal(flat.u, np.zeros((32, 32)))
    assert flat.low_confidence


def test_motion_input_validation():
    a = np.zeros((32, 32))
    with pytest.raises(DimensionError):
        estimate_motion(a, np.zeros((32, 16)))
    with pytest.raises(DimensionError):
        estimate_motion(np.zeros((30, 30)), np.zeros((30, 30)))  # not divisible
    with pytest.raises(DomainError):
        estimate_motion(np.full((32, 32), np.nan), a)
    with pytest.raises(DomainError):
        estimate_motion(a, a, block_size=0)
    with pytest.raises(DomainError):
        estimate_motion(a, a, search_radius=0)


def test_extrapolate_zero_flow_is_persistence():
    rng = np.random.default_rng(5)
    frame = rng.uniform(0, 70, size=(32, 32))
    flow = FlowField(u=np.zeros((32, 32)), v=np.zeros((32, 32)))
    ex = extrapolate(frame, flow, n_leads=4)
    pe = persistence(frame, n_leads=4)
    assert np.array_equal(ex, pe)
    assert pe.shape == (4, 32, 32)
    assert np.array_equal(pe[3], frame)


def test_extrapolate_uniform_flow_matches_roll():
    rng = np.random.default_rng(6)
    frame = blob_field(32, 32, 16.0, 16.0, rng=rng)
    flow = FlowField(u=np.ones((32, 32)), v=np.zeros((32, 32)))
    ex = extrapolate(frame, flow, n_leads=3)
    for k in range(3):
        assert np.allclose(ex[k], np.roll(frame, shift=k + 1, axis=1), atol=1e-6)


def test_extrapolate_conserves_mass():
    rng = np.random.default_rng(7)
    frame = rng.uniform(0, 50, size=(32, 32))
    u = np.broadcast_to(rng.normal(0, 1.5, size=(32, 1)), (32, 32)).copy()
    flow = FlowField(u=u, v=np.full((32, 32), 0.4))
    ex = extrapolate(frame, flow, n_leads=6)
    drift = np.abs(ex.sum(axis=(1, 2)) - frame.sum()).max() / frame.sum()
    assert drift < 1e-12


def test_persistence_contract():
    frame = np.arange(16.0).reshape(4, 4)
    out = persistence(frame, n_leads=3)
    assert out.shape == (3, 4, 4)
    for k in range(3):
        assert np.array_equal(out[k], frame)
    out[0, 0, 0] = -1.0  # leads are independent copies, not views
    assert frame[0, 0] == 0.0
