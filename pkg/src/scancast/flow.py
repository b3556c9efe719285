"""Motion estimation and advection-based extrapolation baselines.

Extrapolation baselines take the most recent observed frame and move it
forward under an estimated motion field (or not at all, for persistence).
Intensities are left unchanged: no growth or decay is modeled, which is
exactly what makes these useful null references for a learned forecaster.

All advection here is semi-Lagrangian with periodic boundaries: the value
at a cell is pulled from the departure point one frame upstream, sampled
bilinearly.  Periodic wrapping keeps the operators mass-friendly and free
of inflow boundary conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "bilinear_sample_periodic",
    "semi_lagrangian_step",
    "FlowField",
    "estimate_motion",
    "extrapolate",
    "persistence",
]


def bilinear_sample_periodic(field: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Sample `field` (H, W) at fractional coordinates with periodic wrap.

    `y` and `x` are broadcast-compatible arrays of row/column positions in
    cell units; integer coordinates reproduce the field values exactly.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise DimensionError(f"expected a 2-D field, got {field.ndim}-D")
    h, w = field.shape
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y0 = np.floor(y)
    x0 = np.floor(x)
    fy = y - y0
    fx = x - x0
    iy0 = y0.astype(np.int64) % h
    ix0 = x0.astype(np.int64) % w
    iy1 = (iy0 + 1) % h
    ix1 = (ix0 + 1) % w
    return (
        field[iy0, ix0] * (1.0 - fy) * (1.0 - fx)
        + field[iy0, ix1] * (1.0 - fy) * fx
        + field[iy1, ix0] * fy * (1.0 - fx)
        + field[iy1, ix1] * fy * fx
    )


def semi_lagrangian_step(field: np.ndarray, u, v) -> np.ndarray:
    """Advect `field` one frame under velocity (u, v) in cells per frame.

    Backward (semi-Lagrangian) form: each cell pulls the value from its
    departure point one step upstream.  `u` (eastward, columns) and `v`
    (southward, rows) may be scalars or (H, W) arrays.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise DimensionError(f"expected a 2-D field, got {field.ndim}-D")
    h, w = field.shape
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dep_y = rows - np.asarray(v, dtype=np.float64)
    dep_x = cols - np.asarray(u, dtype=np.float64)
    return bilinear_sample_periodic(field, dep_y, dep_x)


@dataclass
class FlowField:
    """Per-cell motion in cells per frame; `low_confidence` marks fields
    recovered from degenerate (textureless) inputs."""

    u: np.ndarray
    v: np.ndarray
    low_confidence: bool = False

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DimensionError(
                f"u/v must be matching 2-D grids, got {self.u.shape} and {self.v.shape}"
            )
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise DomainError("flow components must be finite")


def _block_displacement(block: np.ndarray, target: np.ndarray, rows, cols, search_radius: int):
    """Best (dy, dx) aligning `block` with `target` patches by zero-mean
    normalized cross-correlation; None when every comparison is degenerate."""
    h, w = target.shape
    b0 = block - block.mean()
    bn = np.sqrt((b0 * b0).sum())
    if bn == 0.0:
        return None
    best = None
    best_score = -np.inf
    for dy in range(-search_radius, search_radius + 1):
        for dx in range(-search_radius, search_radius + 1):
            patch = target[(rows + dy) % h][:, (cols + dx) % w]
            p0 = patch - patch.mean()
            pn = np.sqrt((p0 * p0).sum())
            if pn == 0.0:
                continue
            score = float((b0 * p0).sum() / (bn * pn))
            if score > best_score:
                best_score = score
                best = (dy, dx)
    return best


def estimate_motion(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    block_size: int = 8,
    search_radius: int = 4,
) -> FlowField:
    """Estimate the motion carrying `frame_a` into `frame_b`.

    Each block_size x block_size block of `frame_a` is matched against
    periodically shifted patches of `frame_b` within `search_radius` cells,
    scoring by zero-mean normalized cross-correlation; the per-block winners
    are bilinearly interpolated to a per-cell field.  Degenerate inputs
    (either frame constant) yield zero flow flagged low-confidence.
    """
    frame_a = np.asarray(frame_a, dtype=np.float64)
    frame_b = np.asarray(frame_b, dtype=np.float64)
    if frame_a.shape != frame_b.shape:
        raise DimensionError(f"frame shape mismatch: {frame_a.shape} vs {frame_b.shape}")
    if frame_a.ndim != 2:
        raise DimensionError(f"expected 2-D frames, got {frame_a.ndim}-D")
    if not (np.isfinite(frame_a).all() and np.isfinite(frame_b).all()):
        raise DomainError("frames contain non-finite values")
    h, w = frame_a.shape
    if block_size < 2 or search_radius < 1:
        raise DomainError("block_size must be >= 2 and search_radius >= 1")
    if h % block_size or w % block_size:
        raise DimensionError(
            f"grid {h}x{w} is not divisible into {block_size}x{block_size} blocks"
        )
    if frame_a.std() == 0.0 or frame_b.std() == 0.0:
        zero = np.zeros((h, w))
        return FlowField(u=zero, v=zero.copy(), low_confidence=True)
    nby, nbx = h // block_size, w // block_size
    bu = np.zeros((nby, nbx))
    bv = np.zeros((nby, nbx))
    for bi in range(nby):
        rows = np.arange(bi * block_size, (bi + 1) * block_size)
        for bj in range(nbx):
            cols = np.arange(bj * block_size, (bj + 1) * block_size)
            hit = _block_displacement(
                frame_a[np.ix_(rows, cols)], frame_b, rows, cols, search_radius
            )
            if hit is not None:
                bv[bi, bj], bu[bi, bj] = float(hit[0]), float(hit[1])
    # block centers sit at offset (block_size - 1) / 2; map cells onto the
    # coarse grid in units of one block and sample it periodically
    centre = (block_size - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    cy = (rows - centre) / block_size
    cx = (cols - centre) / block_size
    u = bilinear_sample_periodic(bu, cy, cx)
    v = bilinear_sample_periodic(bv, cy, cx)
    return FlowField(u=u, v=v, low_confidence=False)


def extrapolate(last_frame: np.ndarray, flow: FlowField, n_leads: int) -> np.ndarray:
    """Advect `last_frame` forward `n_leads` frames under a frozen flow.

    Lead k applies the semi-Lagrangian step k times; intensities are not
    modified.  Returns (n_leads, H, W).
    """
    if n_leads < 1:
        raise DomainError(f"n_leads must be >= 1, got {n_leads}")
    last_frame = np.asarray(last_frame, dtype=np.float64)
    if last_frame.shape != flow.u.shape:
        raise DimensionError(
            f"frame shape {last_frame.shape} does not match flow shape {flow.u.shape}"
        )
    out = np.empty((n_leads,) + last_frame.shape)
    current = last_frame
    for k in range(n_leads):
        current = semi_lagrangian_step(current, flow.u, flow.v)
        out[k] = current
    return out


def persistence(last_frame: np.ndarray, n_leads: int) -> np.ndarray:
    """The null forecast: lead k is a copy of the most recent frame."""
    if n_leads < 1:
        raise DomainError(f"n_leads must be >= 1, got {n_leads}")
    last_frame = np.asarray(last_frame, dtype=np.float64)
    return np.repeat(last_frame[None, ...], n_leads, axis=0)
