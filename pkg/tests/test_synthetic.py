"""Synthetic radar world: physics invariants, file format, dataset assembly."""

import numpy as np
import pytest

from scancast.errors import ConfigurationError, DimensionError, DomainError, FormatError
from scancast.synthetic import (MAX_DBZ, DemGrid, SynthConfig, dem_synthesize,
                                generate_dataset, generate_sample, load_dataset,
                                read_grid, read_manifest, write_grid, write_manifest)


def small_config(**kw):
    base = dict(height=32, width=32, t_in=4, k_out=6, warmup_frames=10)
    base.update(kw)
    return SynthConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SynthConfig(height=33)
    with pytest.raises(ConfigurationError):
        SynthConfig(width=2)
    with pytest.raises(ConfigurationError):
        SynthConfig(t_in=0)
    with pytest.raises(ConfigurationError):
        SynthConfig(diffusion=-0.1)
    with pytest.raises(ConfigurationError):
        SynthConfig(growth_frames=0.0)
    with pytest.raises(ConfigurationError):
        SynthConfig(warmup_frames=-1)
    assert SynthConfig().n_frames == 40


def test_sample_shape_and_range():
    cfg = small_config()
    seq = generate_sample(cfg, seed=0)
    assert seq.frames.shape == (10, 32, 32)
    assert seq.interval_minutes == cfg.interval_minutes
    assert seq.frames.min() >= 0.0
    assert seq.frames.max() <= MAX_DBZ
    assert seq.frames.max() > 5.0  # the world is not empty
    assert seq.dem.normalized.shape == (32, 32)


def test_sample_determinism():
    cfg = small_config()
    a = generate_sample(cfg, seed=123)
    b = generate_sample(cfg, seed=123)
    assert np.array_equal(a.frames, b.frames)
    c = generate_sample(cfg, seed=124)
    assert not np.array_equal(a.frames, c.frames)


def test_zero_dynamics_freezes_field():
    # no wind, no diffusion, no births, no decay to speak of: frames identical
    cfg = small_config(u0=0.0, v0=0.0, shear=0.0, speed_jitter=0.0, diffusion=0.0,
                       birth_rate=0.0, warmup_frames=0, decay_frames=1e9,
                       growth_frames=1e-9)
    seq = generate_sample(cfg, seed=5)
    for k in range(1, seq.frames.shape[0]):
        assert np.array_equal(seq.frames[k], seq.frames[0])


def test_uniform_advection_moves_centroid():
    # pure translation with no sources or smoothing: the centroid of a single
    # blob must advance by exactly (v0, u0) cells per frame (periodic mean)
    cfg = small_config(u0=1.0, v0=0.0, shear=0.0, speed_jitter=0.0, diffusion=0.0,
                       birth_rate=0.0, warmup_frames=0, n_init_blobs=1,
                       background_amp=0.0, decay_frames=1e9, growth_frames=1e-9)
    seq = generate_sample(cfg, seed=7)
    w = cfg.width

    def centroid_x(field):
        # circular mean weighted by intensity
        theta = 2 * np.pi * np.arange(w) / w
        mass = field.sum(axis=0)
        z = (mass * np.exp(1j * theta)).sum()
        return (np.angle(z) % (2 * np.pi)) * w / (2 * np.pi)

    xs = [centroid_x(f) for f in seq.frames]
    for k in range(1, len(xs)):
        step = (xs[k] - xs[k - 1]) % w
        assert abs(step - 1.0) < 1e-6


def test_mass_conservation_without_sources():
    # divergence-free advection plus normalized diffusion preserves total
    # reflectivity to machine precision
    cfg = small_config(birth_rate=0.0, warmup_frames=0, decay_frames=1e9,
                       growth_frames=1e-9, k_out=26)
    for seed in range(10):
        seq = generate_sample(cfg, seed=seed)
        masses = seq.frames.sum(axis=(1, 2))
        drift = np.abs(masses - masses[0]).max() / masses[0]
        assert drift < 1e-12


def test_orographic_gain_zero_ignores_terrain():
    cfg = small_config(orographic_gain=0.0)
    flat = DemGrid.from_elevation(np.zeros((32, 32)))
    ridge = dem_synthesize(cfg, seed=3)
    a = generate_sample(cfg, seed=11, dem=flat)
    b = generate_sample(cfg, seed=11, dem=ridge)
    assert np.array_equal(a.frames, b.frames)
    # with gain on, terrain must matter
    cfg2 = small_config(orographic_gain=0.8)
    c = generate_sample(cfg2, seed=11, dem=flat)
    d = generate_sample(cfg2, seed=11, dem=ridge)
    assert not np.array_equal(c.frames, d.frames)


def test_dem_normalization():
    rng = np.random.default_rng(0)
    for seed in range(20):
        dem = dem_synthesize(SynthConfig(), seed=seed)
        assert dem.normalized.min() == 0.0
        assert dem.normalized.max() == 1.0
        assert dem.normalized.shape == dem.elevation.shape
        # smooth terrain: adjacent-cell gradients stay modest
        gy = np.abs(np.diff(dem.normalized, axis=0)).max()
        gx = np.abs(np.diff(dem.normalized, axis=1)).max()
        assert max(gy, gx) < 0.35
    flat = DemGrid.from_elevation(np.full((8, 8), 3.7))
    assert np.array_equal(flat.normalized, np.zeros((8, 8)))
    with pytest.raises(DimensionError):
        DemGrid.from_elevation(np.zeros((4, 4, 4)))
    with pytest.raises(DomainError):
        DemGrid.from_elevation(np.full((4, 4), np.nan))


def test_grid_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    frames = rng.uniform(0, 70, size=(5, 16, 8)).astype("<f4").astype(np.float64)
    path = tmp_path / "sample.nwcg"
    write_grid(path, frames, interval_minutes=6)
    back, interval = read_grid(path)
    assert interval == 6
    assert np.array_equal(back, frames)  # f32 values survive exactly
    assert path.stat().st_size == 20 + 5 * 16 * 8 * 4


def test_grid_zero_frames(tmp_path):
    path = tmp_path / "empty.nwcg"
    write_grid(path, np.zeros((0, 16, 16)), interval_minutes=10)
    back, interval = read_grid(path)
    assert back.shape == (0, 16, 16)
    assert interval == 10


def test_grid_write_validation(tmp_path):
    path = tmp_path / "bad.nwcg"
    with pytest.raises(DimensionError):
        write_grid(path, np.zeros((16, 16)))
    with pytest.raises(DomainError):
        write_grid(path, np.full((1, 4, 4), np.inf))
    with pytest.raises(DomainError):
        write_grid(path, np.zeros((1, 4, 4)), interval_minutes=2 ** 16)


def test_grid_read_rejects_corruption(tmp_path):
    good = tmp_path / "good.nwcg"
    write_grid(good, np.zeros((2, 8, 8)), interval_minutes=6)
    raw = good.read_bytes()

    bad_magic = tmp_path / "magic.nwcg"
    bad_magic.write_bytes(b"ABCD" + raw[4:])
    with pytest.raises(FormatError, match="byte 0"):
        read_grid(bad_magic)

    bad_version = tmp_path / "version.nwcg"
    bad_version.write_bytes(raw[:4] + b"\x02\x00" + raw[6:])
    with pytest.raises(FormatError, match="byte 4"):
        read_grid(bad_version)

    short_header = tmp_path / "hdr.nwcg"
    short_header.write_bytes(raw[:10])
    with pytest.raises(FormatError, match="truncated header"):
        read_grid(short_header)

    truncated = tmp_path / "trunc.nwcg"
    truncated.write_bytes(raw[:-7])
    with pytest.raises(FormatError, match="truncated payload"):
        read_grid(truncated)

    trailing = tmp_path / "trail.nwcg"
    trailing.write_bytes(raw + b"\x00" * 3)
    with pytest.raises(FormatError, match="trailing garbage"):
        read_grid(trailing)


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.txt"
    entries = [("samples/train_00000.nwcg", "train"),
               ("samples/val_00000.nwcg", "val"),
               ("samples/test_00000.nwcg", "test")]
    write_manifest(path, entries)
    assert read_manifest(path) == entries
    with pytest.raises(FormatError):
        write_manifest(path, [("x.nwcg", "holdout")])


def test_manifest_rejects_malformed_lines(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text("a.nwcg\ttrain\nb.nwcg train\n")
    with pytest.raises(FormatError, match="line 2"):
        read_manifest(path)
    path.write_text("a.nwcg\tvalidation\n")
    with pytest.raises(FormatError, match="line 1"):
        read_manifest(path)


def test_dataset_round_trip(tmp_path):
    cfg = small_config()
    out = tmp_path / "data"
    summary = generate_dataset(cfg, seed=0, out_dir=out, counts={"train": 3, "val": 1, "test": 2})
    assert summary["counts"] == {"train": 3, "val": 1, "test": 2}
    loaded = load_dataset(summary["manifest"])
    assert loaded["interval_minutes"] == cfg.interval_minutes
    assert loaded["splits"]["train"].shape == (3, 10, 32, 32)
    assert loaded["splits"]["val"].shape == (1, 10, 32, 32)
    assert loaded["splits"]["test"].shape == (2, 10, 32, 32)
    assert loaded["dem"].shape == (32, 32)
    assert loaded["dem"].min() == 0.0 and loaded["dem"].max() == 1.0


def test_dataset_regeneration_is_byte_identical(tmp_path):
    cfg = small_config()
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset(cfg, seed=9, out_dir=a, counts={"train": 2, "test": 1})
    generate_dataset(cfg, seed=9, out_dir=b, counts={"train": 2, "test": 1})
    for rel in ("manifest.txt", "dem.nwcg", "samples/train_00001.nwcg",
                "samples/test_00000.nwcg"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_dataset_rejects_unknown_split(tmp_path):
    with pytest.raises(ConfigurationError):
        generate_dataset(small_config(), seed=0, out_dir=tmp_path / "x",
                         counts={"holdout": 2})
    with pytest.raises(ConfigurationError):
        generate_dataset(small_config(), seed=0, out_dir=tmp_path / "y",
                         counts={"train": -1})


def test_threshold_coverage_in_lead_frames():
    # the acceptance protocol scores thresholds 10 through 30 dBZ; the world
    # must exercise all of them in the forecast window
    cfg = SynthConfig(t_in=4, k_out=8)
    dem = dem_synthesize(cfg, seed=0)
    leads = np.concatenate([generate_sample(cfg, seed=s, dem=dem).frames[4:]
                            for s in range(20)])
    for thr, lo in ((10.0, 0.4), (20.0, 0.1), (30.0, 0.02)):
        frac = float((leads >= thr).mean())
        assert frac > lo, f"threshold {thr}: coverage {frac}"
