"""Wall-clock scaling probes for the two sequence mixers.

The recurrent scan walks the sequence once, so its cost grows linearly in
length; self-attention forms an L x L score matrix, so its cost grows
quadratically.  These helpers time both primitives at fixed feature width
over a ladder of lengths, giving the measured counterpart to that
complexity claim.  Timings use the median over repeated runs after a
warmup pass; everything else in the package is seed-deterministic, but
wall-clock numbers are inherently not.
"""

from __future__ import annotations

import time
from statistics import median

import numpy as np

from .blocks import SelfAttention
from .errors import ConfigurationError
from .scan import ScanParams, selective_scan
from .tensor import Tensor

__all__ = ["time_scan", "time_attention", "scaling_table", "DEFAULT_LENGTHS"]

DEFAULT_LENGTHS = (256, 512, 1024, 2048)


def _timed(fn, reps: int) -> float:
    fn()  # warmup
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(median(samples))


def time_scan(length: int, d_feat: int = 16, n_state: int = 4,
              reps: int = 5, seed: int = 0) -> float:
    """Median seconds for one sequential selective scan of `length` steps."""
    if length < 1 or reps < 1:
        raise ConfigurationError("length and reps must be >= 1")
    rng = np.random.default_rng(seed)
    params = ScanParams(
        a=-rng.uniform(0.5, 2.0, size=(d_feat, n_state)),
        b=rng.standard_normal((length, n_state)),
        c=rng.standard_normal((length, n_state)),
        d_skip=rng.standard_normal(d_feat),
        delta=rng.uniform(0.01, 0.1, size=(length, d_feat)),
    )
    x = rng.standard_normal((length, d_feat))
    return _timed(lambda: selective_scan(x, params), reps)


def time_attention(length: int, d_feat: int = 16, n_heads: int = 4,
                   reps: int = 5, seed: int = 0) -> float:
    """Median seconds for one self-attention forward over `length` tokens."""
    if length < 1 or reps < 1:
        raise ConfigurationError("length and reps must be >= 1")
    attn = SelfAttention(d_feat, n_heads, rng=np.random.default_rng(seed))
    x = Tensor(np.random.default_rng(seed + 1).standard_normal((1, length, d_feat)))
    return _timed(lambda: attn(x), reps)


def scaling_table(lengths: tuple[int, ...] = DEFAULT_LENGTHS, d_feat: int = 16,
                  n_state: int = 4, n_heads: int = 4, reps: int = 5) -> list[dict]:
    """Time both mixers across `lengths`; rows are
    {'length', 'scan_seconds', 'attention_seconds'}."""
    rows = []
    for length in lengths:
        rows.append({
            "length": int(length),
            "scan_seconds": time_scan(length, d_feat=d_feat, n_state=n_state, reps=reps),
            "attention_seconds": time_attention(length, d_feat=d_feat, n_heads=n_heads, reps=reps),
        })
    return rows
