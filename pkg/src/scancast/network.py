"""Encoder-decoder forecasting network with terrain fusion.

Input is T past radar frames, normalized to [0, 1] and stacked on the channel
axis; output is K future frames in [0, 1].  The encoder runs two convolutional
stages (each followed by a stride-2 downsample, so skip features are kept at
full and half resolution) and two hybrid scan/attention stages on the
bottleneck token sequence.  A separate small conv stack encodes the terrain
grid to the same token geometry; the two are fused by addition at the decoder
entry, mirrored hybrid stages and upsampling with skip concatenation bring the
field back to full resolution, and a 1x1 head projects K output frames through
a sigmoid.

Tokens: the bottleneck map has T * d_feat channels, read as T time slots of
d_feat channels each; tokens run time-major, then row-major within each slot.

Checkpoints are a self-contained binary format (magic "SCCK"): a JSON config
record followed by named float64 tensors, written so that save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .blocks import ScanAttentionBlock
from .errors import ConfigurationError, DimensionError, FormatError
from .layers import Conv2d, Downsample2, Module, Upsample2
from .tensor import Tensor

__all__ = [
    "ModelConfig",
    "ScanCastNet",
    "TimingReport",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"SCCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; everything the checkpoint needs to rebuild."""

    height: int = 32
    width: int = 32
    t_in: int = 4
    k_out: int = 8
    base_channels: int = 16
    stage_multipliers: tuple[int, int] = (1, 2)
    d_feat: int = 16
    n_state: int = 4
    n_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.height % 4 != 0 or self.width % 4 != 0:
            raise ConfigurationError(
                f"height and width must be divisible by 4, got {self.height}x{self.width}"
            )
        for name in ("height", "width", "t_in", "k_out", "base_channels", "d_feat", "n_state", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if len(self.stage_multipliers) != 2:
            raise ConfigurationError("stage_multipliers must have exactly two entries")
        if any(m < 1 for m in self.stage_multipliers):
            raise ConfigurationError("stage multipliers must be positive")
        if self.d_feat % self.n_heads != 0:
            raise ConfigurationError(
                f"n_heads {self.n_heads} must divide d_feat {self.d_feat}"
            )

    @property
    def c1(self) -> int:
        return self.base_channels * self.stage_multipliers[0]

    @property
    def c2(self) -> int:
        return self.base_channels * self.stage_multipliers[1]

    @property
    def c3(self) -> int:
        # bottleneck channels fold t_in time slots of d_feat features
        return self.t_in * self.d_feat

    @property
    def token_grid(self) -> tuple[int, int, int]:
        """(T_tok, H_tok, W_tok) of the bottleneck token lattice."""
        return (self.t_in, self.height // 4, self.width // 4)

    @property
    def n_tokens(self) -> int:
        t, h, w = self.token_grid
        return t * h * w


@dataclass
class TimingReport:
    n_params: int
    n_runs: int
    mean_ms: float
    median_ms: float


class ScanCastNet(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        c1, c2, c3, d = config.c1, config.c2, config.c3, config.d_feat
        pm = "periodic"
        self.enc1 = Conv2d(config.t_in, c1, 3, rng, padding=1, pad_mode=pm)
        self.down1 = Downsample2(c1, c2, rng)
        self.enc2 = Conv2d(c2, c2, 3, rng, padding=1, pad_mode=pm)
        self.down2 = Downsample2(c2, c3, rng)
        self.pos_emb = Tensor(0.02 * rng.standard_normal((config.n_tokens, d)), requires_grad=True)
        self.block_e3 = ScanAttentionBlock(d, config.n_state, config.n_heads, rng)
        self.block_e4 = ScanAttentionBlock(d, config.n_state, config.n_heads, rng)
        self.dem_conv1 = Conv2d(1, c1, 3, rng, stride=2, padding=1, pad_mode=pm)
        self.dem_conv2 = Conv2d(c1, c2, 3, rng, stride=2, padding=1, pad_mode=pm)
        self.dem_conv3 = Conv2d(c2, d, 3, rng, padding=1, pad_mode=pm)
        self.block_d4 = ScanAttentionBlock(d, config.n_state, config.n_heads, rng)
        self.block_d3 = ScanAttentionBlock(d, config.n_state, config.n_heads, rng)
        self.up1 = Upsample2(c3, c2, rng)
        self.fuse2 = Conv2d(2 * c2, c2, 1, rng)
        self.up2 = Upsample2(c2, c1, rng)
        self.fuse1 = Conv2d(2 * c1, c1, 1, rng)
        self.head = Conv2d(c1, config.k_out, 1, rng)

    # -- tokenization ------------------------------------------------------

    def tokenize(self, grid: Tensor) -> Tensor:
        """(B, T*d, H', W') feature map -> (B, L, d) time-major raster tokens."""
        cfg = self.config
        t, ht, wt = cfg.token_grid
        b = grid.shape[0]
        x = T.reshape(grid, (b, t, cfg.d_feat, ht, wt))
        x = T.transpose(x, (0, 1, 3, 4, 2))
        return T.reshape(x, (b, cfg.n_tokens, cfg.d_feat))

    def detokenize(self, tokens: Tensor) -> Tensor:
        cfg = self.config
        t, ht, wt = cfg.token_grid
        b = tokens.shape[0]
        x = T.reshape(tokens, (b, t, ht, wt, cfg.d_feat))
        x = T.transpose(x, (0, 1, 4, 2, 3))
        return T.reshape(x, (b, cfg.c3, ht, wt))

    # -- encoder / decoder -------------------------------------------------

    def encode(self, frames: Tensor) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """Past frames (B, T, H, W) in [0, 1] -> (bottleneck tokens, skip features)."""
        cfg = self.config
        if frames.ndim != 4 or frames.shape[1:] != (cfg.t_in, cfg.height, cfg.width):
            raise DimensionError(
                f"encode expects (B, {cfg.t_in}, {cfg.height}, {cfg.width}), got {frames.shape}"
            )
        skip1 = T.silu(self.enc1(frames))
        x = T.silu(self.down1(skip1))
        skip2 = T.silu(self.enc2(x))
        x = T.silu(self.down2(skip2))
        tokens = T.add(self.tokenize(x), self.pos_emb)
        tokens = self.block_e3(tokens)
        tokens = self.block_e4(tokens)
        return tokens, (skip1, skip2)

    def encode_dem(self, dem: Tensor) -> Tensor:
        """Terrain grid (1, 1, H, W) in [0, 1] -> tokens (1, L, d_feat).

        The terrain has no time axis; its token map is repeated across all T
        time slots so it aligns with the radar token sequence.
        """
        cfg = self.config
        if dem.ndim != 4 or dem.shape != (1, 1, cfg.height, cfg.width):
            raise DimensionError(
                f"encode_dem expects (1, 1, {cfg.height}, {cfg.width}), got {dem.shape}"
            )
        x = T.silu(self.dem_conv1(dem))
        x = T.silu(self.dem_conv2(x))
        x = self.dem_conv3(x)  # (1, d, H', W')
        t, ht, wt = cfg.token_grid
        x = T.reshape(T.transpose(x, (0, 2, 3, 1)), (1, ht * wt, cfg.d_feat))
        return T.concat([x] * t, axis=1)

    def decode(self, tokens: Tensor, dem_tokens: Tensor | None, skips: tuple[Tensor, Tensor]) -> Tensor:
        """Fused tokens -> K output frames (B, K, H, W) in [0, 1]."""
        skip1, skip2 = skips
        x = tokens if dem_tokens is None else T.add(tokens, dem_tokens)
        x = self.block_d4(x)
        x = self.block_d3(x)
        g = self.detokenize(x)
        g = T.silu(self.up1(g))
        g = T.silu(self.fuse2(T.concat([g, skip2], axis=1)))
        g = T.silu(self.up2(g))
        g = T.silu(self.fuse1(T.concat([g, skip1], axis=1)))
        return T.sigmoid(self.head(g))

    def forward(self, frames: Tensor, dem: Tensor | None = None) -> Tensor:
        tokens, skips = self.encode(frames)
        dem_tokens = self.encode_dem(dem) if dem is not None else None
        return self.decode(tokens, dem_tokens, skips)

    # -- bookkeeping ---------------------------------------------------------

    def count_params(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        # detached copies: optimizer steps mutate parameters in place, and a
        # snapshot must not follow them
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) ^ set(state))
            raise ConfigurationError(f"state dict does not match network parameters: {missing}")
        for name, p in own.items():
            arr = np.array(state[name], dtype=np.float64, copy=True, order="C")
            if arr.shape != p.data.shape:
                raise DimensionError(f"parameter {name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr

    def timing_report(self, n_warmup: int = 3, n_timed: int = 20) -> TimingReport:
        """Parameter count and single-sample forward latency statistics."""
        cfg = self.config
        rng = np.random.default_rng(0)
        frames = Tensor(rng.random((1, cfg.t_in, cfg.height, cfg.width)))
        dem = Tensor(rng.random((1, 1, cfg.height, cfg.width)))
        for _ in range(n_warmup):
            self.forward(frames, dem)
        times = []
        for _ in range(n_timed):
            start = time.perf_counter()
            self.forward(frames, dem)
            times.append((time.perf_counter() - start) * 1e3)
        return TimingReport(
            n_params=self.count_params(),
            n_runs=n_timed,
            mean_ms=float(np.mean(times)),
            median_ms=float(np.median(times)),
        )


# ---------------------------------------------------------------------------
# checkpoint format


def save_checkpoint(path, net: ScanCastNet) -> None:
    """Write config + weights. Deterministic: same net state -> same bytes."""
    cfg = asdict(net.config)
    cfg["stage_multipliers"] = list(net.config.stage_multipliers)
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    params = list(net.named_parameters())
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(params)))
        for name, p in params:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", p.data.ndim))
            for extent in p.data.shape:
                f.write(struct.pack("<I", extent))
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> ScanCastNet:
    with open(path, "rb") as f:
        raw = f.read()

    def fail(offset: int, message: str):
        raise FormatError(f"checkpoint {path}: {message} at byte {offset}")

    if raw[:4] != CHECKPOINT_MAGIC:
        fail(0, f"bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    pos = 4
    (version,) = struct.unpack_from("<I", raw, pos)
    if version != CHECKPOINT_VERSION:
        fail(pos, f"unsupported version {version}")
    pos += 4
    (blob_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos + blob_len > len(raw):
        fail(pos, "config record overruns file")
    try:
        cfg = json.loads(raw[pos : pos + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        fail(pos, f"config record is not valid JSON ({exc})")
    pos += blob_len
    cfg["stage_multipliers"] = tuple(cfg["stage_multipliers"])
    net = ScanCastNet(ModelConfig(**cfg))
    (n_tensors,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    state: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        if pos + 2 > len(raw):
            fail(pos, "truncated tensor name length")
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(raw):
            fail(pos, f"tensor {name} payload overruns file")
        state[name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
        pos = end
    if pos != len(raw):
        fail(pos, f"{len(raw) - pos} trailing bytes")
    net.load_state_dict(state)
    return net
