"""Command-line entry point: generate / train / predict / evaluate / bench.

Configuration comes from a plain-text `key = value` file (UTF-8, `#`
comments) validated against a fixed schema; unknown keys are rejected.
`--seed` overrides the config seed.  Every command is deterministic for a
given (config, seed) pair except for wall-clock timing columns.

Exit codes: 0 success, 2 configuration errors (bad flags, bad config file),
1 runtime failures.  Errors print a single machine-parsable line to stderr:
`error: <category>: <message>`.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from . import __version__
from .benchmarks import DEFAULT_LENGTHS, scaling_table
from .errors import ConfigurationError, DimensionError, DomainError, FormatError
from .forecasters import OpticalFlowForecaster, PersistenceForecaster, ScanCastForecaster
from .metrics import ForecastBundle, evaluate, write_leadtime_csv, write_skill_csv
from .network import ModelConfig, ScanCastNet
from .synthetic import SynthConfig, generate_dataset, load_dataset, write_grid

__all__ = ["main", "parse_config_file", "CONFIG_SCHEMA"]


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _build_schema() -> dict:
    """One flat schema across all commands: key -> (converter, default)."""
    schema: dict[str, tuple] = {}
    synth_defaults = SynthConfig()
    for f in dataclass_fields(SynthConfig):
        conv = {int: int, float: float}[type(getattr(synth_defaults, f.name))]
        schema[f.name] = (conv, getattr(synth_defaults, f.name))
    schema.update({
        "seed": (int, 0),
        "n_train": (int, 500),
        "n_val": (int, 64),
        "n_test": (int, 100),
        "dataset": (str, ""),
        "split": (str, "test"),
        "base_channels": (int, 16),
        "d_feat": (int, 16),
        "n_state": (int, 4),
        "n_heads": (int, 4),
        "n_epochs": (int, 40),
        "batch_size": (int, 8),
        "learning_rate": (float, 2e-3),
        "lambda_spectral": (float, 1.0),
        "lambda_mse": (float, 0.0),
        "frequency_weighting": (_bool, False),
        "bench_reps": (int, 5),
    })
    return schema


CONFIG_SCHEMA = _build_schema()


def parse_config_file(path: str | None) -> dict:
    """Read `key = value` lines into a validated config dict.

    Missing file -> error; missing keys fall back to schema defaults;
    unknown keys or unparsable values are rejected.
    """
    config = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if path is None:
        return config
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path!r}: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        converter, _ = CONFIG_SCHEMA[key]
        try:
            config[key] = converter(value)
        except ValueError as e:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}: {e}") from e
    return config


def apply_overrides(config: dict, overrides: list[str]) -> None:
    """Apply positional KEY=VALUE arguments on top of the config file."""
    for token in overrides:
        if "=" not in token:
            raise ConfigurationError(f"override {token!r} is not KEY=VALUE")
        key, _, value = token.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        converter, _ = CONFIG_SCHEMA[key]
        try:
            config[key] = converter(value)
        except ValueError as e:
            raise ConfigurationError(f"bad value for {key!r}: {e}") from e


def _synth_config(config: dict) -> SynthConfig:
    kwargs = {f.name: config[f.name] for f in dataclass_fields(SynthConfig)}
    return SynthConfig(**kwargs)


def _require(config: dict, key: str, hint: str) -> str:
    value = config[key]
    if not value:
        raise ConfigurationError(f"config key {key!r} is required {hint}")
    return value


def _manifest_path(dataset: str) -> str:
    if os.path.isdir(dataset):
        return os.path.join(dataset, "manifest.txt")
    return dataset


def _load_split(config: dict, split: str):
    dataset = _require(config, "dataset", "(path to a dataset directory or manifest)")
    data = load_dataset(_manifest_path(dataset))
    if split not in data["splits"]:
        raise ConfigurationError(f"dataset has no {split!r} split")
    return data


def _split_frames(frames: np.ndarray, t_in: int, k_out: int):
    if frames.shape[1] != t_in + k_out:
        raise DimensionError(
            f"dataset samples have {frames.shape[1]} frames, expected t_in + k_out = {t_in + k_out}"
        )
    return frames[:, :t_in], frames[:, t_in:]


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, config: dict) -> int:
    seed = args.seed if args.seed is not None else config["seed"]
    out_dir = args.out or "dataset"
    counts = {"train": config["n_train"], "val": config["n_val"], "test": config["n_test"]}
    info = generate_dataset(_synth_config(config), seed, out_dir, counts)
    total = sum(info["counts"].values())
    print(f"wrote {total} samples to {info['out_dir']} "
          f"(train {info['counts']['train']}, val {info['counts']['val']}, test {info['counts']['test']})")
    print(f"manifest: {info['manifest']}")
    return 0


def cmd_train(args, config: dict) -> int:
    seed = args.seed if args.seed is not None else config["seed"]
    out_dir = args.out or "run"
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = args.checkpoint or os.path.join(out_dir, "model.ckpt")
    data = _load_split(config, "train")
    t_in, k_out = config["t_in"], config["k_out"]
    x_train, y_train = _split_frames(data["splits"]["train"], t_in, k_out)
    validation = None
    if "val" in data["splits"]:
        validation = _split_frames(data["splits"]["val"], t_in, k_out)
    est = ScanCastForecaster(
        t_in=t_in,
        horizon=k_out,
        height=x_train.shape[2],
        width=x_train.shape[3],
        base_channels=config["base_channels"],
        d_feat=config["d_feat"],
        n_state=config["n_state"],
        n_heads=config["n_heads"],
        n_epochs=config["n_epochs"],
        batch_size=config["batch_size"],
        learning_rate=config["learning_rate"],
        lambda_spectral=config["lambda_spectral"],
        lambda_mse=config["lambda_mse"],
        frequency_weighting=config["frequency_weighting"],
        seed=seed,
        verbose=1,
    )
    est.fit(x_train, y_train, dem=data["dem"], validation_data=validation)
    log_path = os.path.join(out_dir, "training_log.csv")
    with open(log_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_csi20"])
        for record in est.history_:
            writer.writerow([
                record["epoch"],
                f"{record['train_loss']:.6f}",
                f"{record['val_loss']:.6f}" if "val_loss" in record else "",
                f"{record['val_csi20']:.6f}" if record.get("val_csi20") is not None else "",
            ])
    est.save(checkpoint_path)
    print(f"training log: {log_path}")
    print(f"checkpoint: {checkpoint_path}")
    if est.diverged_:
        # last finished epoch's weights were restored and saved above
        print(f"error: runtime: {est.stop_reason_}; last-good checkpoint retained", file=sys.stderr)
        return 1
    return 0


def cmd_predict(args, config: dict) -> int:
    if not args.checkpoint:
        raise ConfigurationError("predict requires --checkpoint")
    out_dir = args.out or "predictions"
    os.makedirs(out_dir, exist_ok=True)
    split = config["split"]
    data = _load_split(config, split)
    est = ScanCastForecaster.from_checkpoint(args.checkpoint, dem=data["dem"])
    cfg = est.config_
    x, _ = _split_frames(data["splits"][split], cfg.t_in, cfg.k_out)
    pred = est.predict(x)
    interval = data["interval_minutes"] or 6
    for s in range(pred.shape[0]):
        write_grid(os.path.join(out_dir, f"pred_{split}_{s:05d}.nwcg"), pred[s], interval)
    print(f"wrote {pred.shape[0]} prediction files to {out_dir}")
    return 0


def cmd_evaluate(args, config: dict) -> int:
    if not args.checkpoint:
        raise ConfigurationError("evaluate requires --checkpoint")
    out_dir = args.out or "evaluation"
    os.makedirs(out_dir, exist_ok=True)
    split = config["split"]
    data = _load_split(config, split)
    est = ScanCastForecaster.from_checkpoint(args.checkpoint, dem=data["dem"])
    cfg = est.config_
    x, y = _split_frames(data["splits"][split], cfg.t_in, cfg.k_out)
    interval = data["interval_minutes"] or 6
    lead_minutes = [interval * (k + 1) for k in range(cfg.k_out)]

    forecasts = {
        "model": est.predict(x),
        "persistence": PersistenceForecaster(horizon=cfg.k_out).fit(x).predict(x),
        "optflow": OpticalFlowForecaster(horizon=cfg.k_out).fit(x).predict(x),
    }
    reports = {}
    for label, pred in forecasts.items():
        bundle = ForecastBundle(pred=pred, truth=y, lead_minutes=lead_minutes)
        reports[label] = evaluate(bundle)
        csi20 = reports[label].pooled[20.0].csi
        shown = "undefined" if csi20 is None else f"{csi20:.4f}"
        print(f"{label}: pooled CSI@20 dBZ = {shown}")
    skill_path = os.path.join(out_dir, "skill.csv")
    lead_path = os.path.join(out_dir, "leadtime.csv")
    write_skill_csv(skill_path, reports)
    write_leadtime_csv(lead_path, reports)
    print(f"wrote {skill_path} and {lead_path}")
    return 0


def cmd_bench(args, config: dict) -> int:
    out_dir = args.out or "bench"
    os.makedirs(out_dir, exist_ok=True)
    model_config = ModelConfig(
        height=config["height"], width=config["width"],
        t_in=config["t_in"], k_out=config["k_out"],
        base_channels=config["base_channels"], d_feat=config["d_feat"],
        n_state=config["n_state"], n_heads=config["n_heads"],
        seed=config["seed"],
    )
    net = ScanCastNet(model_config)
    report = net.timing_report(n_warmup=1, n_timed=5)
    rows = [
        ("param_count", "", str(report.n_params)),
        ("forward_latency_mean_seconds", "", f"{report.mean_ms / 1e3:.6f}"),
    ]
    for entry in scaling_table(DEFAULT_LENGTHS, d_feat=config["d_feat"],
                               n_state=config["n_state"], n_heads=config["n_heads"],
                               reps=config["bench_reps"]):
        rows.append(("scan_seconds", str(entry["length"]), f"{entry['scan_seconds']:.6f}"))
        rows.append(("attention_seconds", str(entry["length"]), f"{entry['attention_seconds']:.6f}"))
    bench_path = os.path.join(out_dir, "bench.csv")
    with open(bench_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["quantity", "setting", "value"])
        writer.writerows(rows)
    print(f"parameters: {report.n_params}")
    print(f"forward latency: {report.mean_ms:.1f} ms")
    print(f"wrote {bench_path}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scancast",
        description="Precipitation nowcasting: synthetic data, training, evaluation, benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "write a synthetic dataset (samples, DEM, manifest)"),
        ("train", "train the forecaster; writes checkpoint + per-epoch CSV log"),
        ("predict", "run a checkpoint over a dataset split; writes NWCG files"),
        ("evaluate", "score model and baselines; writes skill.csv + leadtime.csv"),
        ("bench", "parameter count, forward latency, scan/attention scaling"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", metavar="PATH", help="key = value config file")
        sub.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
        sub.add_argument("--out", metavar="DIR", help="output directory")
        sub.add_argument("--checkpoint", metavar="PATH", help="checkpoint path")
        sub.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                         help="config overrides applied after the file")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config_file(args.config)
        apply_overrides(config, args.overrides)
        return _COMMANDS[args.command](args, config)
    except ConfigurationError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except (FormatError, DimensionError, DomainError) as e:
        print(f"error: data: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
