"""Categorical skill and image quality metrics against brute-force oracles."""

import csv

import numpy as np
import pytest

from scancast.errors import DimensionError, DomainError
from scancast.metrics import (ContingencyTable, ForecastBundle, SkillScores,
                              contingency_table, evaluate, mae, psnr, skill_scores,
                              ssim, write_leadtime_csv, write_skill_csv)


def brute_table(pred, obs, threshold):
    """Per-pixel double loop; the vectorized path must match it exactly."""
    h = m = f = c = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            pe = pred[i, j] >= threshold
            oe = obs[i, j] >= threshold
            if pe and oe:
                h += 1
            elif not pe and oe:
                m += 1
            elif pe and not oe:
                f += 1
            else:
                c += 1
    return ContingencyTable(h, m, f, c)


def test_contingency_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(30):
        pred = rng.uniform(0, 70, size=(16, 16))
        obs = rng.uniform(0, 70, size=(16, 16))
        thr = float(rng.uniform(5, 65))
        # plant exact threshold ties on both sides to pin the >= convention
        pred[0, 0] = thr
        obs[0, 1] = thr
        got = contingency_table(pred, obs, thr)
        want = brute_table(pred, obs, thr)
        assert got == want
        assert got.total == 256


def test_contingency_addition():
    a = ContingencyTable(1, 2, 3, 4)
    b = ContingencyTable(10, 20, 30, 40)
    s = a + b
    assert s == ContingencyTable(11, 22, 33, 44)
    assert s.total == 110


def test_skill_hand_case():
    # 30 hits, 10 misses, 10 false alarms, 450 correct negatives (total 500):
    # h_random = 40*40/500 = 3.2, ets = 26.8/46.8
    t = ContingencyTable(hits=30, misses=10, false_alarms=10, correct_negatives=450)
    s = skill_scores(t)
    assert s.csi == pytest.approx(0.6)
    assert s.far == pytest.approx(0.25)
    assert s.pod == pytest.approx(0.75)
    assert s.ets == pytest.approx(26.8 / 46.8)
    assert abs(s.ets - 0.5726) < 1e-3


def test_ets_approaches_csi_with_many_correct_negatives():
    t = ContingencyTable(hits=30, misses=10, false_alarms=10, correct_negatives=10 ** 6)
    s = skill_scores(t)
    assert abs(s.ets - s.csi) < 1e-3


def test_undefined_scores_are_none():
    nothing = skill_scores(ContingencyTable(0, 0, 0, 100))
    assert nothing.csi is None and nothing.pod is None
    assert nothing.far is None and nothing.ets is None
    only_hits = skill_scores(ContingencyTable(5, 0, 0, 95))
    assert only_hits.csi == 1.0 and only_hits.far == 0.0 and only_hits.pod == 1.0
    d = nothing.as_dict()
    assert set(d) == {"csi", "far", "pod", "ets"}
    assert all(v is None for v in d.values())


def test_mae_and_psnr():
    pred = np.full((4, 4), 0.6)
    obs = np.full((4, 4), 0.5)
    assert mae(pred, obs) == pytest.approx(0.1)
    # mse = 0.01 -> psnr = 10*log10(1/0.01) = 20 dB
    assert psnr(pred, obs) == pytest.approx(20.0)
    assert psnr(obs, obs) == 99.0  # capped for identical fields
    with pytest.raises(DomainError):
        psnr(np.full((4, 4), 1.5), obs)
    with pytest.raises(DimensionError):
        mae(np.zeros((4, 4)), np.zeros((4, 5)))


def naive_ssim(pred, obs, window):
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    k = window.shape[0]
    vals = []
    for i in range(pred.shape[0] - k + 1):
        for j in range(pred.shape[1] - k + 1):
            p = pred[i:i + k, j:j + k]
            o = obs[i:i + k, j:j + k]
            mp = (window * p).sum()
            mo = (window * o).sum()
            vp = (window * p * p).sum() - mp * mp
            vo = (window * o * o).sum() - mo * mo
            cov = (window * p * o).sum() - mp * mo
            vals.append(((2 * mp * mo + c1) * (2 * cov + c2))
                        / ((mp * mp + mo * mo + c1) * (vp + vo + c2)))
    return float(np.mean(vals))


def test_ssim_against_window_loop():
    from scancast.metrics import SSIM_SIGMA, SSIM_WINDOW, _gaussian_window
    rng = np.random.default_rng(1)
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    assert window.sum() == pytest.approx(1.0)
    for trial in range(3):
        pred = rng.random((16, 16))
        obs = rng.random((16, 16))
        assert ssim(pred, obs) == pytest.approx(naive_ssim(pred, obs, window), abs=1e-12)


def test_ssim_bounds_and_identity():
    rng = np.random.default_rng(2)
    x = rng.random((12, 12))
    assert ssim(x, x) == pytest.approx(1.0)
    y = rng.random((12, 12))
    assert -1.0 <= ssim(x, y) < 1.0
    with pytest.raises(DimensionError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))  # smaller than the window
    with pytest.raises(DimensionError):
        ssim(np.zeros((4, 16, 16)), np.zeros((4, 16, 16)))


def test_bundle_validation():
    with pytest.raises(DimensionError):
        ForecastBundle(np.zeros((2, 3, 16, 16)), np.zeros((2, 4, 16, 16)),
                       lead_minutes=[10, 20, 30])
    with pytest.raises(DimensionError):
        ForecastBundle(np.zeros((2, 3, 16, 16)), np.zeros((2, 3, 16, 16)),
                       lead_minutes=[10, 20])
    with pytest.raises(DimensionError):
        ForecastBundle(np.zeros((3, 16, 16)), np.zeros((3, 16, 16)),
                       lead_minutes=[10, 20, 30])
    with pytest.raises(DomainError):
        ForecastBundle(np.zeros((2, 1, 16, 16)), np.zeros((2, 1, 16, 16)),
                       lead_minutes=[10], thresholds=[])


def make_bundle(seed=0, n=3, k=2):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 70, size=(n, k, 16, 16))
    pred = np.clip(truth + rng.normal(0, 8, size=truth.shape), 0, 70)
    return ForecastBundle(pred, truth, lead_minutes=[10 * (i + 1) for i in range(k)])


def test_evaluate_structure():
    bundle = make_bundle()
    report = evaluate(bundle)
    assert report.thresholds == [10.0, 15.0, 20.0, 30.0]
    assert report.lead_minutes == [10, 20]
    for thr in report.thresholds:
        assert isinstance(report.pooled[thr], SkillScores)
        assert len(report.lead_csi[thr]) == 2
        assert report.excluded_frames[thr] >= 0
    assert set(report.image) == {"ssim", "psnr", "mae"}
    assert 0.0 < report.image["ssim"] <= 1.0
    # pooled counts must cover every pixel of every frame
    t = report.pooled[20.0]
    total = t.csi  # csi defined since the bundle has plenty of echo
    assert total is not None


def test_evaluate_pooled_matches_manual_sum():
    bundle = make_bundle(seed=3)
    report = evaluate(bundle)
    acc = ContingencyTable()
    for s in range(bundle.pred.shape[0]):
        for lead in range(bundle.pred.shape[1]):
            acc = acc + contingency_table(bundle.pred[s, lead], bundle.truth[s, lead], 20.0)
    assert report.pooled[20.0] == skill_scores(acc)


def test_evaluate_counts_undefined_frames():
    # no echo anywhere: every frame's CSI is undefined at every threshold
    z = np.zeros((2, 2, 16, 16))
    report = evaluate(ForecastBundle(z, z, lead_minutes=[10, 20]))
    for thr in report.thresholds:
        assert report.pooled[thr].csi is None
        assert report.averaged_csi[thr] is None
        assert report.excluded_frames[thr] == 4
        assert report.lead_csi[thr] == [None, None]
    assert report.image["psnr"] == 99.0


def test_skill_csv_schema(tmp_path):
    reports = {"model": evaluate(make_bundle(seed=4)),
               "persistence": evaluate(make_bundle(seed=5))}
    path = tmp_path / "skill.csv"
    write_skill_csv(path, reports)
    text = path.read_text()
    assert text.endswith("\n")
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["threshold", "metric", "value", "model"]
    body = rows[1:]
    # per model: 4 thresholds x 4 scores + 3 image rows
    assert len(body) == 2 * (4 * 4 + 3)
    models = {r[3] for r in body}
    assert models == {"model", "persistence"}
    image_rows = [r for r in body if r[0] == ""]
    assert {r[1] for r in image_rows} == {"ssim", "psnr", "mae"}
    for r in body:
        if r[2] != "":
            float(r[2])  # parseable, '.' separator


def test_leadtime_csv_schema(tmp_path):
    reports = {"model": evaluate(make_bundle(seed=6, k=3))}
    path = tmp_path / "leadtime.csv"
    write_leadtime_csv(path, reports)
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["lead_minutes", "threshold", "csi", "model"]
    assert len(rows) - 1 == 4 * 3  # thresholds x leads
    assert rows[1][0] == "10" and rows[3][0] == "30"


def test_undefined_serializes_as_empty_cell(tmp_path):
    z = np.zeros((1, 1, 16, 16))
    report = evaluate(ForecastBundle(z, z, lead_minutes=[10]))
    path = tmp_path / "skill.csv"
    write_skill_csv(path, {"model": report})
    rows = list(csv.reader(path.read_text().splitlines()))
    csi_rows = [r for r in rows if r[1] == "csi"]
    assert csi_rows and all(r[2] == "" for r in csi_rows)
