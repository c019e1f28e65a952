"""Acceptance checks. Each prints one PASS/FAIL line (run with -s to see them
inline; they are also repeated in the terminal summary)."""
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from skinadapt.adapt import (
    ExperimentPlan,
    TrainConfig,
    apply_budget,
    fresh_model,
    run_experiment_matrix,
    target_training_set,
    train_supervised,
    train_with_pseudo_labels,
)
from skinadapt.data import PRESETS, REFERENCE_PAIR, ImageSample, make_synthetic_domain, reference_pair
from skinadapt.metrics import aggregate_report, compute_metrics, dice_loss, dice_loss_grad, f1_from_iou
from skinadapt.models import PatchCNNConfig, UNetConfig, build_patch_cnn, load_params, patch_cnn_forward, save_params
from skinadapt.models.persist import params_to_bytes
from skinadapt.models.state import predict_full_image
from skinadapt.report import results_csv

from .gradcheck import unet_fd_check

pytestmark = pytest.mark.slow
RESULTS: list[str] = []


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def oracle_counts(q, g):
    tp = fp = fn = tn = 0
    for a, b in zip(q, g):
        if a and b:
            tp += 1
        elif a:
            fp += 1
        elif b:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def oracle_ratio(num, den, both_empty):
    if both_empty:
        return 1.0
    return float(Fraction(num, den)) if den else 0.0


def test_metric_oracle(capsys):
    t0 = time.perf_counter()
    vecs = [np.array(v, dtype=np.uint8) for v in itertools.product((0, 1), repeat=8)]
    mismatches = 0
    for q in vecs:
        for g in vecs:
            r = compute_metrics(q, g)
            tp, fp, fn, tn = oracle_counts(q, g)
            both = tp + fp + fn == 0
            expect = (Fraction(tp + tn, 8), oracle_ratio(tp, tp + fp + fn, both), oracle_ratio(tp, tp + fp, both),
                      oracle_ratio(tp, tp + fn, both), oracle_ratio(2 * tp, 2 * tp + fp + fn, both))
            if (r.tp, r.fp, r.fn, r.tn) != (tp, fp, fn, tn) or (r.acc, r.iou, r.prec, r.rec, r.f1) != (
                float(expect[0]), *expect[1:]
            ):
                mismatches += 1
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 200))
        r = compute_metrics(rng.random(n) < rng.random(), rng.random(n) < rng.random())
        worst = max(worst, abs(r.f1 - f1_from_iou(r.iou)))
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-12 and dt < 10
    verdict(capsys, 1, ok, f"65536 pairs, {mismatches} mismatches; identity max err {worst:.1e}; {dt:.1f}s (<10s)")


def test_gradients(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    h = 1e-4
    worst = 0.0
    for _ in range(100):
        p = rng.uniform(0.01, 0.99, 64)
        g = (rng.random(64) < 0.5).astype(float)
        num = np.array([(dice_loss(p + h * e, g) - dice_loss(p - h * e, g)) / (2 * h) for e in np.eye(64)])
        worst = max(worst, np.abs(dice_loss_grad(p, g) - num).max() / np.abs(num).max())
    unet_ok, unet_err = unet_fd_check()
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and unet_ok and unet_err < 1e-3 and dt < 120
    verdict(capsys, 2, ok, f"dice grad rel err {worst:.1e} (<1e-4); unet 16x16 rel err {unet_err:.1e} (<1e-3); {dt:.1f}s")


OVERFIT_CFG = TrainConfig(steps=500, batch_size=4, augment=None, seed=0)


def overfit_run():
    ds = make_synthetic_domain(PRESETS["diverse"], 4, (64, 64), seed=5)
    m, _ = train_supervised(fresh_model("unet", UNetConfig(levels=3, base_channels=8), OVERFIT_CFG), ds, OVERFIT_CFG)
    reports = [compute_metrics(predict_full_image(m, s) >= 0.5, s.mask, s.id) for s in ds.samples]
    return m, ds, aggregate_report(reports)


@pytest.fixture(scope="module")
def overfit():
    t0 = time.perf_counter()
    m, ds, agg = overfit_run()
    return m, ds, agg, time.perf_counter() - t0


def test_overfit(capsys, overfit):
    _, _, agg, dt = overfit
    ok = agg.f1 >= 0.99 and dt < 300
    verdict(capsys, 3, ok, f"train F1 {agg.f1:.4f} (>=0.99) after 500 steps; {dt:.1f}s (<300s)")


def test_patch_geometry(capsys):
    m = build_patch_cnn(PatchCNNConfig(patch_size=35), seed=0)
    rng = np.random.default_rng(2)
    s = ImageSample("g", "d", rng.random((100, 100, 3)).astype(np.float32))
    pred = predict_full_image(m, s)
    border = np.ones((100, 100), bool)
    border[17:83, 17:83] = False
    ys, xs = rng.integers(17, 83, 500), rng.integers(17, 83, 500)
    patches = np.stack([s.pixels[y - 17 : y + 18, x - 17 : x + 18] for y, x in zip(ys, xs)])
    diff = np.abs(patch_cnn_forward(m, patches) - pred[ys, xs]).max()
    ok = not pred[border].any() and pred[~border].min() > 0 and diff <= 1e-5
    verdict(capsys, 4, ok, f"17-px border all zero: {not pred[border].any()}; "
                           f"500 interior pixels max |diff| {diff:.1e} (<=1e-5, float32 round-off)")


def reference_plans():
    cfg = TrainConfig(steps=500, seed=REFERENCE_PAIR["train_seed"])
    return [
        ExperimentPlan(None, "specific", "target_only", 0.05, train=cfg),
        ExperimentPlan("diverse", "specific", "source_only", 0.0, train=cfg),
        ExperimentPlan("diverse", "specific", "fine_tune", 0.05, train=cfg),
        ExperimentPlan("diverse", "specific", "pseudo_label", 0.0, train=cfg),
        ExperimentPlan("diverse", "specific", "combined", 0.0, train=cfg),
    ]


def run_reference():
    src, tgt = reference_pair()
    t0 = time.perf_counter()
    table = run_experiment_matrix(reference_plans(), {"diverse": src, "specific": tgt})
    return table, time.perf_counter() - t0


@pytest.fixture(scope="module")
def reference():
    return run_reference()


def f1_of(table, approach, budget):
    source = None if approach == "target_only" else "diverse"
    return table.cell(source, "specific", approach, budget).mean_f1


def test_pseudo_label_direction(capsys, reference):
    table, dt = reference
    so, pl, comb = (f1_of(table, a, 0.0) for a in ("source_only", "pseudo_label", "combined"))
    ok = pl - so >= 0.02 and comb >= pl - 0.01 and dt < 900
    verdict(capsys, 5, ok, f"source-only {100 * so:.2f} -> pseudo-label {100 * pl:.2f} (+{100 * (pl - so):.2f}, need >=2); "
                           f"combined {100 * comb:.2f} (>= pseudo-label - 1); matrix {dt:.0f}s (<900s)")


def test_fine_tune_beats_target_only(capsys, reference):
    table, dt = reference
    ft, to = f1_of(table, "fine_tune", 0.05), f1_of(table, "target_only", 0.05)
    verdict(capsys, 6, ft >= to and dt < 900, f"at 5% labels fine-tune {100 * ft:.2f} >= target-only {100 * to:.2f}")


def test_determinism(capsys, overfit, reference):
    first_table, _ = reference
    again, _ = run_reference()
    same_matrix = results_csv(first_table) == results_csv(again)
    m1, _, agg1, _ = overfit
    m2, _, agg2 = overfit_run()
    same_overfit = agg1.csv_row() == agg2.csv_row() and params_to_bytes(m1) == params_to_bytes(m2)
    verdict(capsys, 7, same_matrix and same_overfit,
            f"result CSV identical on rerun: matrix {same_matrix}, overfit {same_overfit}")


def test_persistence(capsys, overfit, tmp_path):
    m, ds, _, _ = overfit
    save_params(m, tmp_path / "m.bin")
    back = load_params(tmp_path / "m.bin")
    sa, sb = m.snapshot(), back.snapshot()
    same_params = sa.keys() == sb.keys() and all(np.array_equal(sa[k], sb[k]) for k in sa)
    same_preds = all(np.array_equal(predict_full_image(m, s), predict_full_image(back, s)) for s in ds.samples)
    verdict(capsys, 8, same_params and same_preds, f"parameters bit-exact {same_params}; predictions bit-identical {same_preds}")


def test_degenerate_schedule(capsys):
    _, tgt = reference_pair()
    cfg = TrainConfig(steps=40, seed=3)
    full = apply_budget(tgt, 1.0, cfg)
    sup, _ = train_supervised(fresh_model("unet", None, cfg), full, cfg)
    pset = target_training_set(full, None, tau=0.7)
    pl, _ = train_with_pseudo_labels(pset, cfg, fresh_model("unet", None, cfg))
    same = params_to_bytes(sup) == params_to_bytes(pl)
    verdict(capsys, 9, same and pset.n_pseudo == 0, f"all-true-label pseudo-label training == supervised: {same}")


