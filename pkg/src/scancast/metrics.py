"""Forecast verification: categorical skill, image similarity, reports, CSV.

Categorical scores follow the standard contingency-table definitions with the
event defined as value >= threshold (inclusive).  Pooling sums the tables over
all frames before scoring (the primary aggregation); per-frame score averages
are also computed, skipping undefined frames and reporting how many were
skipped.  Undefined scores are represented as None, never NaN.

Thresholds are in physical dBZ units against denormalized fields; the image
metrics (SSIM, PSNR, MAE) expect values normalized to [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, DomainError

__all__ = [
    "ContingencyTable",
    "SkillScores",
    "contingency_table",
    "skill_scores",
    "mae",
    "psnr",
    "ssim",
    "ForecastBundle",
    "SkillReport",
    "evaluate",
    "write_skill_csv",
    "write_leadtime_csv",
]

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class ContingencyTable:
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_negatives: int = 0

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        return ContingencyTable(
            self.hits + other.hits,
            self.misses + other.misses,
            self.false_alarms + other.false_alarms,
            self.correct_negatives + other.correct_negatives,
        )

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_negatives


@dataclass
class SkillScores:
    csi: float | None
    far: float | None
    pod: float | None
    ets: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"csi": self.csi, "far": self.far, "pod": self.pod, "ets": self.ets}


def contingency_table(pred: np.ndarray, obs: np.ndarray, threshold: float) -> ContingencyTable:
    """Count hits/misses/false alarms/correct negatives at one threshold."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DimensionError(f"pred/obs shape mismatch: {pred.shape} vs {obs.shape}")
    pe = pred >= threshold
    oe = obs >= threshold
    hits = int(np.count_nonzero(pe & oe))
    misses = int(np.count_nonzero(~pe & oe))
    false_alarms = int(np.count_nonzero(pe & ~oe))
    correct_negatives = pred.size - hits - misses - false_alarms
    return ContingencyTable(hits, misses, false_alarms, correct_negatives)


def skill_scores(table: ContingencyTable) -> SkillScores:
    """CSI, FAR, POD, ETS from a contingency table; None where undefined."""
    h, m, f = table.hits, table.misses, table.false_alarms
    csi = h / (h + m + f) if (h + m + f) > 0 else None
    far = f / (h + f) if (h + f) > 0 else None
    pod = h / (h + m) if (h + m) > 0 else None
    ets = None
    if table.total > 0:
        h_random = (h + f) * (h + m) / table.total
        denom = h + m + f - h_random
        if denom != 0.0:
            ets = (h - h_random) / denom
    return SkillScores(csi=csi, far=far, pod=pod, ets=ets)


# ---------------------------------------------------------------------------
# image metrics (unit dynamic range)


def _check_unit_range(*arrays: np.ndarray) -> None:
    for arr in arrays:
        if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
            raise DomainError(
                f"image metrics expect values in [0, 1], got range [{arr.min()}, {arr.max()}]"
            )


def mae(pred: np.ndarray, obs: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DimensionError(f"pred/obs shape mismatch: {pred.shape} vs {obs.shape}")
    return float(np.mean(np.abs(pred - obs)))


def psnr(pred: np.ndarray, obs: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over unit range, capped at 99 dB."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DimensionError(f"pred/obs shape mismatch: {pred.shape} vs {obs.shape}")
    _check_unit_range(pred, obs)
    mse = float(np.mean((pred - obs) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pred: np.ndarray, obs: np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Windows are taken at valid positions only; statistics are window-weighted
    means/variances/covariance and the per-window map is averaged.
    """
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise DimensionError(f"pred/obs shape mismatch: {pred.shape} vs {obs.shape}")
    if pred.ndim != 2:
        raise DimensionError(f"ssim expects 2-D grids, got {pred.ndim}-D")
    if min(pred.shape) < SSIM_WINDOW:
        raise DimensionError(
            f"ssim needs grids of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {pred.shape}"
        )
    _check_unit_range(pred, obs)
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    px = sliding_window_view(pred, (SSIM_WINDOW, SSIM_WINDOW))
    ox = sliding_window_view(obs, (SSIM_WINDOW, SSIM_WINDOW))
    mu_x = np.tensordot(px, win, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(ox, win, axes=([2, 3], [0, 1]))
    xx = np.tensordot(px * px, win, axes=([2, 3], [0, 1]))
    yy = np.tensordot(ox * ox, win, axes=([2, 3], [0, 1]))
    xy = np.tensordot(px * ox, win, axes=([2, 3], [0, 1]))
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# bundle evaluation


@dataclass
class ForecastBundle:
    """Predictions and truth in dBZ: (n_samples, K, H, W), plus lead times."""

    pred: np.ndarray
    truth: np.ndarray
    lead_minutes: list[int]
    thresholds: list[float] = field(default_factory=lambda: [10.0, 15.0, 20.0, 30.0])
    max_dbz: float = 70.0

    def __post_init__(self):
        self.pred = np.asarray(self.pred, dtype=np.float64)
        self.truth = np.asarray(self.truth, dtype=np.float64)
        if self.pred.shape != self.truth.shape:
            raise DimensionError(
                f"pred/truth shape mismatch: {self.pred.shape} vs {self.truth.shape}"
            )
        if self.pred.ndim != 4:
            raise DimensionError("bundle arrays must be (n_samples, K, H, W)")
        if self.pred.shape[1] != len(self.lead_minutes):
            raise DimensionError(
                f"{self.pred.shape[1]} lead frames but {len(self.lead_minutes)} lead times"
            )
        if not self.thresholds:
            raise DomainError("at least one threshold is required")


@dataclass
class SkillReport:
    thresholds: list[float]
    lead_minutes: list[int]
    pooled: dict[float, SkillScores]
    averaged_csi: dict[float, float | None]
    excluded_frames: dict[float, int]
    lead_csi: dict[float, list[float | None]]
    image: dict[str, float]


def evaluate(bundle: ForecastBundle) -> SkillReport:
    """Score a forecast bundle: pooled categorical skill (primary), per-frame
    averaged CSI with exclusion counts, per-lead-time CSI, and image metrics
    on normalized fields."""
    n_samples, k, _, _ = bundle.pred.shape
    pooled: dict[float, SkillScores] = {}
    averaged: dict[float, float | None] = {}
    excluded: dict[float, int] = {}
    lead_csi: dict[float, list[float | None]] = {}
    for thr in bundle.thresholds:
        total = ContingencyTable()
        per_frame: list[float] = []
        n_undef = 0
        per_lead: list[float | None] = []
        for lead in range(k):
            lead_table = ContingencyTable()
            for s in range(n_samples):
                tab = contingency_table(bundle.pred[s, lead], bundle.truth[s, lead], thr)
                lead_table = lead_table + tab
                c = skill_scores(tab).csi
                if c is None:
                    n_undef += 1
                else:
                    per_frame.append(c)
            total = total + lead_table
            per_lead.append(skill_scores(lead_table).csi)
        pooled[thr] = skill_scores(total)
        averaged[thr] = float(np.mean(per_frame)) if per_frame else None
        excluded[thr] = n_undef
        lead_csi[thr] = per_lead
    norm_pred = np.clip(bundle.pred / bundle.max_dbz, 0.0, 1.0)
    norm_truth = np.clip(bundle.truth / bundle.max_dbz, 0.0, 1.0)
    ssim_vals = []
    psnr_vals = []
    mae_vals = []
    for s in range(n_samples):
        for lead in range(k):
            ssim_vals.append(ssim(norm_pred[s, lead], norm_truth[s, lead]))
            psnr_vals.append(psnr(norm_pred[s, lead], norm_truth[s, lead]))
            mae_vals.append(mae(norm_pred[s, lead], norm_truth[s, lead]))
    image = {
        "ssim": float(np.mean(ssim_vals)),
        "psnr": float(np.mean(psnr_vals)),
        "mae": float(np.mean(mae_vals)),
    }
    return SkillReport(
        thresholds=list(bundle.thresholds),
        lead_minutes=list(bundle.lead_minutes),
        pooled=pooled,
        averaged_csi=averaged,
        excluded_frames=excluded,
        lead_csi=lead_csi,
        image=image,
    )


# ---------------------------------------------------------------------------
# CSV serialization
#
# Fixed column orders; '.' decimal separator; newline-terminated rows.
# Undefined values serialize as empty cells.  The trailing `model` column
# lets one file carry the model and baseline rows side by side.


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def write_skill_csv(path, reports: dict[str, SkillReport]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["threshold", "metric", "value", "model"])
        for label, report in reports.items():
            for thr in report.thresholds:
                scores = report.pooled[thr]
                for metric, value in scores.as_dict().items():
                    writer.writerow([f"{thr:g}", metric, _fmt(value), label])
            for metric in ("ssim", "psnr", "mae"):
                writer.writerow(["", metric, _fmt(report.image[metric]), label])


def write_leadtime_csv(path, reports: dict[str, SkillReport]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["lead_minutes", "threshold", "csi", "model"])
        for label, report in reports.items():
            for thr in report.thresholds:
                for minutes, value in zip(report.lead_minutes, report.lead_csi[thr]):
                    writer.writerow([str(minutes), f"{thr:g}", _fmt(value), label])
