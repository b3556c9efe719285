"""Seeded synthetic radar sequences with known dynamics, plus grid file I/O.

The generator produces reflectivity movies whose physics are simple enough
to reason about exactly but rich enough to reward a learned forecaster over
pure extrapolation: a smooth background field advected by a sheared,
divergence-free wind and diffused each frame, plus convective cells that are
born at random, grow and decay on fixed time constants, ride the wind, and
are amplified over high terrain.  Every stochastic choice derives from one
seeded generator, so a (config, seed) pair pins the sequence bit for bit.

Reflectivities are dBZ in [0, 70]; normalization to [0, 1] is the affine
map value / 70 and is exactly invertible.

File format ("NWCG"): a fixed little-endian header (magic, version, frame
count, height, width, frame interval in minutes) followed by the frames as
row-major float32.  A zero-frame file is legal.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError, FormatError
from .flow import bilinear_sample_periodic, semi_lagrangian_step

__all__ = [
    "MAX_DBZ",
    "SynthConfig",
    "DemGrid",
    "RadarSequence",
    "dem_synthesize",
    "generate_sample",
    "write_grid",
    "read_grid",
    "write_manifest",
    "read_manifest",
    "generate_dataset",
    "load_dataset",
]

MAX_DBZ = 70.0

NWCG_MAGIC = b"NWCG"
NWCG_VERSION = 1
# header: magic (4), version u16 (2), frame count u32 (4), H u32 (4),
# W u32 (4), interval minutes u16 (2) -> 20 bytes, all little-endian
_HEADER = struct.Struct("<4sHIIIH")


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic world.

    Velocities are cells per frame; time constants are frames.  Defaults
    describe the full protocol (one hour of input, three hours of leads at
    a 6-minute cadence); desk-scale runs shrink `t_in`/`k_out`.
    """

    height: int = 32
    width: int = 32
    t_in: int = 10
    k_out: int = 30
    interval_minutes: int = 6
    u0: float = 0.6
    v0: float = 0.3
    shear: float = 0.3
    speed_jitter: float = 0.1
    diffusion: float = 0.4
    birth_rate: float = 0.3
    growth_frames: float = 3.0
    decay_frames: float = 12.0
    cell_amp: float = 40.0
    cell_width: float = 2.5
    orographic_gain: float = 0.8
    background_amp: float = 10.0
    init_blob_amp: float = 25.0
    init_blob_sigma: float = 4.0
    n_init_blobs: int = 3
    warmup_frames: int = 30
    dem_ridge_amp: float = 1.0
    dem_noise_amp: float = 0.25

    def __post_init__(self):
        for name in ("height", "width"):
            n = getattr(self, name)
            if n < 4 or (n & (n - 1)) != 0:
                raise ConfigurationError(f"{name} must be a power of two >= 4, got {n}")
        for name in ("t_in", "k_out", "interval_minutes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in (
            "speed_jitter",
            "diffusion",
            "birth_rate",
            "cell_amp",
            "cell_width",
            "orographic_gain",
            "background_amp",
            "init_blob_amp",
            "dem_ridge_amp",
            "dem_noise_amp",
        ):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.growth_frames <= 0 or self.decay_frames <= 0:
            raise ConfigurationError("growth_frames and decay_frames must be positive")
        if self.init_blob_sigma <= 0:
            raise ConfigurationError("init_blob_sigma must be positive")
        if self.n_init_blobs < 0 or self.warmup_frames < 0:
            raise ConfigurationError("n_init_blobs and warmup_frames must be nonnegative")

    @property
    def n_frames(self) -> int:
        return self.t_in + self.k_out


@dataclass
class DemGrid:
    """Terrain elevation and its affine rescaling onto [0, 1]."""

    elevation: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_elevation(cls, elevation: np.ndarray) -> "DemGrid":
        elevation = np.asarray(elevation, dtype=np.float64)
        if elevation.ndim != 2:
            raise DimensionError(f"DEM must be 2-D, got {elevation.ndim}-D")
        if not np.isfinite(elevation).all():
            raise DomainError("DEM contains non-finite values")
        lo, hi = elevation.min(), elevation.max()
        if hi > lo:
            normalized = (elevation - lo) / (hi - lo)
        else:
            normalized = np.zeros_like(elevation)
        return cls(elevation=elevation, normalized=normalized)


@dataclass
class RadarSequence:
    """frames: (t_in + k_out, H, W) dBZ in [0, 70]; the DEM it was grown over."""

    frames: np.ndarray
    interval_minutes: int
    dem: DemGrid

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise DimensionError(f"frames must be (N, H, W), got {self.frames.shape}")
        if self.frames.size and (self.frames.min() < 0.0 or self.frames.max() > MAX_DBZ):
            raise DomainError(
                f"reflectivity outside [0, {MAX_DBZ}]: "
                f"range [{self.frames.min()}, {self.frames.max()}]"
            )


def _periodic_gaussian_blur(field: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with wrap-around boundaries; sigma in cells.
    The kernel is normalized, so the field total is conserved exactly."""
    if sigma <= 0.0:
        return field
    radius = max(1, int(math.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()
    for axis in (0, 1):
        acc = np.zeros_like(field)
        for off, wgt in zip(offsets, kernel):
            acc += wgt * np.roll(field, -off, axis=axis)
        field = acc
    return field


def _periodic_blob(height: int, width: int, cy: float, cx: float, sigma: float) -> np.ndarray:
    """Unit-peak Gaussian bump at (cy, cx) under minimum-image distances."""
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    dy = (rows - cy + height / 2.0) % height - height / 2.0
    dx = (cols - cx + width / 2.0) % width - width / 2.0
    return np.exp(-(dy**2 + dx**2) / (2.0 * sigma**2))


def dem_synthesize(config: SynthConfig, seed: int) -> DemGrid:
    """Smooth ridged terrain: a few low-frequency sinusoidal ridges at seeded
    orientations plus blurred seeded noise, normalized so min -> 0, max -> 1."""
    rng = np.random.default_rng(seed)
    h, w = config.height, config.width
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    elevation = np.zeros((h, w))
    for _ in range(3):
        ky = rng.integers(1, 3)
        kx = rng.integers(1, 3)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = config.dem_ridge_amp * rng.uniform(0.5, 1.0)
        elevation += amp * np.sin(2.0 * math.pi * (ky * rows / h + kx * cols / w) + phase)
    noise = rng.standard_normal((h, w))
    elevation += config.dem_noise_amp * _periodic_gaussian_blur(noise, 2.0)
    return DemGrid.from_elevation(elevation)


class _Cell:
    __slots__ = ("cy", "cx", "ju", "jv", "amp", "age")

    def __init__(self, cy, cx, ju, jv, amp):
        self.cy = cy
        self.cx = cx
        self.ju = ju
        self.jv = jv
        self.amp = amp
        self.age = 0


def _envelope(age: float, growth: float, decay: float) -> float:
    return (1.0 - math.exp(-age / growth)) * math.exp(-age / decay)


def _velocity_field(config: SynthConfig):
    """Divergence-free wind: eastward speed varies with row only, southward
    speed is constant."""
    rows = np.arange(config.height, dtype=np.float64)
    u_row = config.u0 + config.shear * np.sin(2.0 * math.pi * rows / config.height)
    u = np.tile(u_row[:, None], (1, config.width))
    v = np.full((config.height, config.width), config.v0)
    return u, v


def generate_sample(config: SynthConfig, seed: int, dem: DemGrid | None = None) -> RadarSequence:
    """Generate one (t_in + k_out)-frame sequence for (config, seed).

    Dynamics per frame: the background is advected semi-Lagrangially under
    the sheared wind and blurred by `diffusion`; each live cell ages, rides
    the wind at its center (plus its own fixed jitter), and contributes a
    Gaussian bump scaled by a growth-decay envelope and by the orographic
    factor 1 + orographic_gain * normalized elevation at its center.  Births
    follow a Poisson draw per frame, including `warmup_frames` hidden frames
    before the first recorded one so the movie opens mid-weather.

    With orographic_gain = 0 the output is bit-identical across DEMs: the
    terrain never influences random draws, only the rendered amplitude.
    """
    rng = np.random.default_rng(seed)
    h, w = config.height, config.width
    if dem is None:
        dem = dem_synthesize(config, seed)
    if dem.normalized.shape != (h, w):
        raise DimensionError(
            f"DEM shape {dem.normalized.shape} does not match grid ({h}, {w})"
        )
    u, v = _velocity_field(config)

    background = np.zeros((h, w))
    smooth = _periodic_gaussian_blur(rng.standard_normal((h, w)), 3.0)
    lo, hi = smooth.min(), smooth.max()
    if hi > lo:
        background += config.background_amp * (smooth - lo) / (hi - lo)
    for _ in range(config.n_init_blobs):
        cy = rng.uniform(0.0, h)
        cx = rng.uniform(0.0, w)
        background += config.init_blob_amp * _periodic_blob(h, w, cy, cx, config.init_blob_sigma)

    cells: list[_Cell] = []
    max_age = 8.0 * config.decay_frames

    def spawn():
        for _ in range(rng.poisson(config.birth_rate)):
            cells.append(
                _Cell(
                    cy=rng.uniform(0.0, h),
                    cx=rng.uniform(0.0, w),
                    ju=rng.normal(0.0, config.speed_jitter),
                    jv=rng.normal(0.0, config.speed_jitter),
                    amp=config.cell_amp * rng.uniform(0.7, 1.3),
                )
            )

    def step():
        nonlocal background
        background = semi_lagrangian_step(background, u, v)
        background = _periodic_gaussian_blur(background, config.diffusion)
        survivors = []
        for cell in cells:
            cell.age += 1
            speed_u = config.u0 + config.shear * math.sin(2.0 * math.pi * cell.cy / h)
            cell.cx = (cell.cx + speed_u + cell.ju) % w
            cell.cy = (cell.cy + config.v0 + cell.jv) % h
            if cell.age <= max_age:
                survivors.append(cell)
        cells[:] = survivors
        spawn()

    def render() -> np.ndarray:
        total = background.copy()
        for cell in cells:
            env = _envelope(cell.age, config.growth_frames, config.decay_frames)
            if env <= 0.0:
                continue
            oro = 1.0 + config.orographic_gain * float(
                bilinear_sample_periodic(dem.normalized, np.float64(cell.cy), np.float64(cell.cx))
            )
            total += cell.amp * env * oro * _periodic_blob(h, w, cell.cy, cell.cx, config.cell_width)
        return np.clip(total, 0.0, MAX_DBZ)

    spawn()
    for _ in range(config.warmup_frames):
        step()
    frames = np.empty((config.n_frames, h, w))
    frames[0] = render()
    for k in range(1, config.n_frames):
        step()
        frames[k] = render()
    return RadarSequence(frames=frames, interval_minutes=config.interval_minutes, dem=dem)


# ---------------------------------------------------------------------------
# NWCG grid files


def write_grid(path, frames: np.ndarray, interval_minutes: int = 6) -> None:
    """Write frames (N, H, W) as an NWCG file; N = 0 is legal."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise DimensionError(f"frames must be (N, H, W), got shape {frames.shape}")
    if frames.size and not np.isfinite(frames).all():
        raise DomainError("frames contain non-finite values")
    if not 0 <= interval_minutes < 2**16:
        raise DomainError(f"interval_minutes out of u16 range: {interval_minutes}")
    n, h, w = frames.shape
    header = _HEADER.pack(NWCG_MAGIC, NWCG_VERSION, n, h, w, interval_minutes)
    payload = frames.astype("<f4").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_grid(path) -> tuple[np.ndarray, int]:
    """Read an NWCG file back as (frames (N, H, W) float64, interval_minutes)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"truncated header: {len(blob)} bytes, need {_HEADER.size} (at byte 0)")
    magic, version, n, h, w, interval = _HEADER.unpack_from(blob, 0)
    if magic != NWCG_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {NWCG_MAGIC!r}")
    if version != NWCG_VERSION:
        raise FormatError(f"unsupported version {version} at byte 4, expected {NWCG_VERSION}")
    expected = n * h * w * 4
    got = len(blob) - _HEADER.size
    if got < expected:
        raise FormatError(
            f"truncated payload at byte {len(blob)}: need {expected} payload bytes, got {got}"
        )
    if got > expected:
        raise FormatError(f"trailing garbage at byte {_HEADER.size + expected}: {got - expected} extra bytes")
    frames = np.frombuffer(blob, dtype="<f4", count=n * h * w, offset=_HEADER.size)
    return frames.astype(np.float64).reshape(n, h, w), interval


def write_manifest(path, entries: list[tuple[str, str]]) -> None:
    """Plain-text manifest: one 'relative/path<TAB>split' line per sample."""
    for _, split in entries:
        if split not in ("train", "val", "test"):
            raise FormatError(f"unknown split label {split!r}")
    with open(path, "w") as f:
        for sample_path, split in entries:
            f.write(f"{sample_path}\t{split}\n")


def read_manifest(path) -> list[tuple[str, str]]:
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"manifest line {lineno} is not 'path<TAB>split': {line!r}")
            sample_path, split = parts
            if split not in ("train", "val", "test"):
                raise FormatError(f"manifest line {lineno}: unknown split label {split!r}")
            entries.append((sample_path, split))
    return entries


# ---------------------------------------------------------------------------
# dataset assembly


def generate_dataset(config: SynthConfig, seed: int, out_dir, counts: dict[str, int]) -> dict:
    """Write a dataset directory: one shared DEM, one NWCG file per sample,
    and a manifest.  Sample s of the dataset uses child seed (seed, index)
    via the seed sequence, so any subset regenerates identically.

    Returns a summary dict (paths and per-split counts).
    """
    import os

    for split in counts:
        if split not in ("train", "val", "test"):
            raise ConfigurationError(f"unknown split {split!r}")
        if counts[split] < 0:
            raise ConfigurationError(f"negative count for split {split!r}")
    os.makedirs(out_dir, exist_ok=True)
    samples_dir = os.path.join(out_dir, "samples")
    os.makedirs(samples_dir, exist_ok=True)
    dem = dem_synthesize(config, seed)
    write_grid(os.path.join(out_dir, "dem.nwcg"), dem.normalized[None, ...], config.interval_minutes)
    entries = []
    index = 0
    for split in ("train", "val", "test"):
        for i in range(counts.get(split, 0)):
            child_seed = np.random.SeedSequence([seed, index]).generate_state(1)[0]
            seq = generate_sample(config, int(child_seed), dem=dem)
            rel = os.path.join("samples", f"{split}_{i:05d}.nwcg")
            write_grid(os.path.join(out_dir, rel), seq.frames, config.interval_minutes)
            entries.append((rel, split))
            index += 1
    write_manifest(os.path.join(out_dir, "manifest.txt"), entries)
    return {
        "out_dir": str(out_dir),
        "manifest": os.path.join(str(out_dir), "manifest.txt"),
        "dem": os.path.join(str(out_dir), "dem.nwcg"),
        "counts": {s: counts.get(s, 0) for s in ("train", "val", "test")},
    }


def load_dataset(manifest_path) -> dict:
    """Load a dataset directory back into arrays.

    Returns {'splits': {split: (S, N, H, W) array}, 'dem': (H, W) array or
    None, 'interval_minutes': int}.  All samples must share one shape.
    """
    import os

    base = os.path.dirname(os.path.abspath(manifest_path))
    entries = read_manifest(manifest_path)
    splits: dict[str, list[np.ndarray]] = {}
    interval = None
    shape = None
    for rel, split in entries:
        frames, ivl = read_grid(os.path.join(base, rel))
        if shape is None:
            shape, interval = frames.shape, ivl
        elif frames.shape != shape:
            raise FormatError(
                f"sample {rel!r} has shape {frames.shape}, dataset uses {shape}"
            )
        splits.setdefault(split, []).append(frames)
    dem = None
    dem_path = os.path.join(base, "dem.nwcg")
    if os.path.exists(dem_path):
        dem_frames, _ = read_grid(dem_path)
        if dem_frames.shape[0] != 1:
            raise FormatError(f"dem.nwcg must hold exactly 1 frame, got {dem_frames.shape[0]}")
        dem = dem_frames[0]
    return {
        "splits": {s: np.stack(v) for s, v in splits.items()},
        "dem": dem,
        "interval_minutes": interval,
    }
