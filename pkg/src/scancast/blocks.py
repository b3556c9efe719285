"""Hybrid scan/attention block over token sequences.

Tokens are (B, L, D) tensors; L runs time-major, then raster order within each
time slot, which fixes a single global direction for the selective scan.  The
block applies four sublayers in order: gated selective scan, MLP,
multi-head self-attention, MLP.  Each sublayer is wrapped in a pre-norm
residual (x + f(norm(x))) and ends in an output projection, so zeroing every
output projection makes the whole block an exact identity.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .layers import LayerNorm, Linear, Module
from .scan import scan_op
from .tensor import Tensor

__all__ = ["SelfAttention", "GatedScan", "Mlp", "ScanAttentionBlock"]

# softplus(DELTA_BIAS_INIT) == 0.05: scans start with slow, stable dynamics
DELTA_BIAS_INIT = math.log(math.expm1(0.05))


class SelfAttention(Module):
    """Multi-head scaled dot-product self-attention with an output projection."""

    def __init__(self, d_feat: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        if d_feat % n_heads != 0:
            raise ConfigurationError(f"n_heads {n_heads} must divide d_feat {d_feat}")
        self.d_feat = d_feat
        self.n_heads = n_heads
        self.d_head = d_feat // n_heads
        self.w_q = Linear(d_feat, d_feat, rng)
        self.w_k = Linear(d_feat, d_feat, rng)
        self.w_v = Linear(d_feat, d_feat, rng)
        self.w_o = Linear(d_feat, d_feat, rng)

    def _split_heads(self, x: Tensor, bsz: int, length: int) -> Tensor:
        x = T.reshape(x, (bsz, length, self.n_heads, self.d_head))
        return T.transpose(x, (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.d_feat:
            raise DimensionError(f"attention expects (B, L, {self.d_feat}), got {x.shape}")
        bsz, length, _ = x.shape
        q = self._split_heads(self.w_q(x), bsz, length)
        k = self._split_heads(self.w_k(x), bsz, length)
        v = self._split_heads(self.w_v(x), bsz, length)
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2)))
        scores = scores * (1.0 / math.sqrt(self.d_head))
        att = T.softmax(scores, axis=-1)
        ctx = T.matmul(att, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (bsz, length, self.d_feat))
        return self.w_o(ctx)

    def output_projection(self) -> Linear:
        return self.w_o


class GatedScan(Module):
    """Selective-scan sublayer: out = w_out( scan(proj(x)) * silu(gate(x)) ).

    The scan parameters are input-dependent: delta via a softplus-squashed
    linear map (bias set so the initial step size is about 0.05), b and c via
    plain linear maps.  The diagonal state matrix is parameterized as
    a = -exp(log_a), learned in log magnitude, with log_a initialized to
    log(1..N) for every channel so the initial spectrum spans slow to fast.
    """

    def __init__(self, d_feat: int, n_state: int, rng: np.random.Generator):
        super().__init__()
        self.d_feat = d_feat
        self.n_state = n_state
        self.in_proj = Linear(d_feat, d_feat, rng)
        self.gate = Linear(d_feat, d_feat, rng)
        self.delta_proj = Linear(d_feat, d_feat, rng)
        self.delta_proj.bias.data[:] = DELTA_BIAS_INIT
        self.b_proj = Linear(d_feat, n_state, rng)
        self.c_proj = Linear(d_feat, n_state, rng)
        self.log_a = Tensor(
            np.tile(np.log(np.arange(1.0, n_state + 1.0)), (d_feat, 1)), requires_grad=True
        )
        self.d_skip = Tensor(np.ones(d_feat), requires_grad=True)
        self.out_proj = Linear(d_feat, d_feat, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.d_feat:
            raise DimensionError(f"scan sublayer expects (B, L, {self.d_feat}), got {x.shape}")
        u = self.in_proj(x)
        delta = T.softplus(self.delta_proj(x))
        b = self.b_proj(x)
        c = self.c_proj(x)
        a = T.neg(T.exp(self.log_a))
        y = scan_op(u, delta, b, c, a, self.d_skip)
        return self.out_proj(T.mul(y, T.silu(self.gate(x))))

    def output_projection(self) -> Linear:
        return self.out_proj


class Mlp(Module):
    """Two-layer feed-forward sublayer with silu and 2x expansion."""

    def __init__(self, d_feat: int, rng: np.random.Generator, expansion: int = 2):
        super().__init__()
        self.lin1 = Linear(d_feat, expansion * d_feat, rng)
        self.lin2 = Linear(expansion * d_feat, d_feat, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.lin2(T.silu(self.lin1(x)))

    def output_projection(self) -> Linear:
        return self.lin2


class ScanAttentionBlock(Module):
    """Pre-norm residual pipeline: scan -> MLP -> attention -> MLP."""

    def __init__(self, d_feat: int, n_state: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(d_feat)
        self.scan = GatedScan(d_feat, n_state, rng)
        self.norm2 = LayerNorm(d_feat)
        self.mlp1 = Mlp(d_feat, rng)
        self.norm3 = LayerNorm(d_feat)
        self.attention = SelfAttention(d_feat, n_heads, rng)
        self.norm4 = LayerNorm(d_feat)
        self.mlp2 = Mlp(d_feat, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = T.add(x, self.scan(self.norm1(x)))
        x = T.add(x, self.mlp1(self.norm2(x)))
        x = T.add(x, self.attention(self.norm3(x)))
        x = T.add(x, self.mlp2(self.norm4(x)))
        return x

    def sublayers(self):
        return (self.scan, self.mlp1, self.attention, self.mlp2)

    def zero_output_projections(self) -> None:
        """Make the block an exact identity (used to start residual branches cold)."""
        for sub in self.sublayers():
            proj = sub.output_projection()
            proj.weight.data[:] = 0.0
            proj.bias.data[:] = 0.0
