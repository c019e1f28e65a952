import numpy as np
import pytest

from skinadapt.adapt import (
    APPROACHES,
    ExperimentPlan,
    TrainConfig,
    apply_budget,
    cell_is_valid,
    combined_pipeline,
    evaluate,
    fine_tune,
    fresh_model,
    generate_pseudo_labels,
    run_experiment_matrix,
    table6_plans,
    target_training_set,
    train_items,
    train_supervised,
    train_with_pseudo_labels,
)
from skinadapt.adapt.pseudo import pseudo_mask
from skinadapt.adapt.train import TRUE
from skinadapt.data import make_synthetic_domain, split_dataset
from skinadapt.errors import DataError
from skinadapt.metrics import aggregate_report, compute_metrics, dice_loss
from skinadapt.models import UNetConfig
from skinadapt.report import DASH, results_csv, results_markdown

MICRO = UNetConfig(levels=2, base_channels=4, frame=(32, 32))
FAST = TrainConfig(steps=6, batch_size=2, finetune_head_steps=3)


def same_params(a, b):
    sa, sb = a.snapshot(), b.snapshot()
    return all(np.array_equal(sa[k], sb[k]) for k in sa)


def test_zero_steps_is_noop(tiny_split):
    m = fresh_model("unet", MICRO, FAST)
    out, hist = train_supervised(m, tiny_split, TrainConfig(steps=0))
    assert same_params(m, out) and hist == []


def test_history_per_epoch(tiny_split):
    _, hist = train_supervised(fresh_model("unet", MICRO, FAST), tiny_split, FAST)
    # 6 train images, batch 2 -> 3 steps per epoch
    assert [h["step"] for h in hist] == [3, 6]
    assert all(np.isfinite(h["loss"]) for h in hist)


def test_no_labels_rejected(tiny_split):
    with pytest.raises(DataError):
        train_supervised(fresh_model("unet", MICRO, FAST), apply_budget(tiny_split, 0.0, FAST), FAST)


def test_in_domain_fit_and_self_labeling(tiny_split):
    cfg = TrainConfig(steps=150, batch_size=2, augment=None)
    m, hist = train_supervised(fresh_model("unet", UNetConfig(frame=(32, 32)), cfg), tiny_split, cfg)
    assert hist[-1]["loss"] < hist[0]["loss"]
    train = [tiny_split.samples[i] for i in tiny_split.indices("train")]
    pset = generate_pseudo_labels(m, train)
    reports = [compute_metrics(p.mask, s.mask) for p, s in zip(pset.samples, train)]
    assert aggregate_report(reports).f1 >= 0.95


def test_pseudo_mask_threshold():
    assert pseudo_mask(np.full((3, 4), 0.9), 0.5).all()
    p = np.random.default_rng(0).random((10, 10))
    assert np.array_equal(pseudo_mask(p, 0.5), np.argmax(np.stack([1 - p, p]), axis=0))
    assert pseudo_mask(np.array([0.5]), 0.5)[0] == 1


def test_target_training_set_mixes_sources(tiny_split):
    half = apply_budget(tiny_split, 0.5, FAST)
    m = fresh_model("unet", MICRO, FAST)
    pset = target_training_set(half, m)
    assert len(pset) == 6 and pset.n_pseudo == 3
    for s, src, i in zip(pset.samples, pset.sources, half.indices("train")):
        if src == TRUE:
            assert np.array_equal(s.mask, tiny_split.samples[i].mask)


def test_weighted_loss_replay(tiny_split):
    half = apply_budget(tiny_split, 0.5, FAST)
    pset = target_training_set(half, fresh_model("unet", MICRO, FAST))
    cfg = TrainConfig(steps=10, batch_size=4, ramp_start=0.2, ramp_end=0.6, alpha_final=0.8)
    logged = []
    train_with_pseudo_labels(pset, cfg, fresh_model("unet", MICRO, cfg), on_step=logged.append)
    assert [r["alpha"] for r in logged] == [cfg.alpha(t) for t in range(10)]
    assert logged[0]["alpha"] == 0 and logged[-1]["alpha"] == 0.8
    for rec in logged:
        per = np.array([dice_loss(p.ravel(), g.ravel()) for p, g in zip(rec["probs"], rec["masks"])])
        ps = rec["is_pseudo"]
        expect = (per[~ps].mean() if (~ps).any() else 0.0) + rec["alpha"] * (per[ps].mean() if ps.any() else 0.0)
        assert rec["loss"] == pytest.approx(expect, rel=1e-5)


def test_constant_unit_weight_schedule(tiny_split):
    cfg = TrainConfig(steps=4, batch_size=3, ramp_start=0.0, ramp_end=0.0, alpha_final=1.0)
    assert all(cfg.alpha(t) == 1.0 for t in range(4))
    pset = target_training_set(apply_budget(tiny_split, 0.0, cfg), fresh_model("unet", MICRO, cfg))
    logged = []
    train_with_pseudo_labels(pset, cfg, fresh_model("unet", MICRO, cfg), on_step=logged.append)
    for rec in logged:  # single-source batches: plain mean over the batch
        per = [dice_loss(p.ravel(), g.ravel()) for p, g in zip(rec["probs"], rec["masks"])]
        assert rec["loss"] == pytest.approx(np.mean(per), rel=1e-5)


def test_all_true_labels_match_supervised(tiny_split):
    a, _ = train_supervised(fresh_model("unet", MICRO, FAST), tiny_split, FAST)
    pset = target_training_set(tiny_split, None, tau=0.3)
    assert pset.n_pseudo == 0
    b, _ = train_with_pseudo_labels(pset, FAST, fresh_model("unet", MICRO, FAST))
    assert same_params(a, b)


def test_empty_training_set():
    with pytest.raises(DataError):
        train_items(fresh_model("unet", MICRO, FAST), [], FAST)


def test_fine_tune_head_phase_freezes(tiny_split):
    src = fresh_model("unet", MICRO, FAST)
    head_only = fine_tune(src, tiny_split, TrainConfig(steps=0, batch_size=2, finetune_head_steps=5))
    before, after = src.snapshot(), head_only.snapshot()
    for k in before:
        unchanged = np.array_equal(before[k], after[k])
        assert unchanged == (not k.startswith("head.")), k
    assert all(head_only.trainable.values())


def test_fine_tune_needs_labels(tiny_split):
    with pytest.raises(DataError):
        fine_tune(fresh_model("unet", MICRO, FAST), apply_budget(tiny_split, 0.0, FAST), FAST)


def test_combined_details(tiny_split, easy_domain):
    source = split_dataset(make_synthetic_domain(easy_domain, 6, (32, 32), seed=9), 0.2, seed=0)
    r = combined_pipeline(source, tiny_split, 0.0, FAST, "unet", MICRO, details=True)
    assert r.fine_tuned is None and r.notes
    assert not same_params(r.model_a, r.model_b)
    r = combined_pipeline(source, tiny_split, 1.0, FAST, "unet", MICRO, details=True)
    assert r.fine_tuned is not None and not r.notes


def test_invalid_cells():
    assert not cell_is_valid("source_only", 0.5)
    assert not cell_is_valid("fine_tune", 0.0)
    assert not cell_is_valid("pseudo_label", 1.0)
    with pytest.raises(ValueError):
        ExperimentPlan("a", "b", "fine_tune", 0.0)


# Filled cells of the published result layout, per approach, over 0/5/10/50/100 %.
PUBLISHED_PATTERN = {
    "target_only": "-xxxx",
    "source_only": "x----",
    "fine_tune": "-xxxx",
    "pseudo_label": "xxxx-",
    "combined": "xxxx-",
}


@pytest.fixture(scope="module")
def matrix_data():
    from skinadapt.data import PRESETS

    src = split_dataset(make_synthetic_domain(PRESETS["diverse"], 8, (16, 16), seed=1), 0.25, seed=0)
    tgt = split_dataset(make_synthetic_domain(PRESETS["specific"], 24, (16, 16), seed=2), 0.15, seed=0)
    return {"diverse": src, "specific": tgt}


def micro_plans():
    cfg = TrainConfig(steps=2, batch_size=2, finetune_head_steps=1)
    return table6_plans([("diverse", "specific")], train=cfg,
                        model_config=UNetConfig(levels=2, base_channels=2, frame=(16, 16)))


def test_matrix_dash_pattern_and_determinism(matrix_data):
    t1 = run_experiment_matrix(micro_plans(), matrix_data)
    for src, tgt, approach in t1.row_keys():
        got = "".join("-" if t1.cell(src, tgt, approach, b) is None else "x" for b in t1.budgets)
        assert got == PUBLISHED_PATTERN[approach]
    assert [k[2] for k in t1.row_keys()] == list(APPROACHES)
    md = results_markdown(t1)
    assert md.count(f" {DASH} ") == sum(p.count("-") for p in PUBLISHED_PATTERN.values())
    t2 = run_experiment_matrix(micro_plans(), matrix_data)
    assert results_csv(t1) == results_csv(t2)


def test_matrix_single_target_only_cell(matrix_data):
    cfg = TrainConfig(steps=3, batch_size=2)
    mc = UNetConfig(levels=2, base_channels=2, frame=(16, 16))
    table = run_experiment_matrix([ExperimentPlan(None, "specific", "target_only", 1.0, "unet", cfg, mc)], matrix_data)
    tgt = matrix_data["specific"]
    m, _ = train_supervised(fresh_model("unet", mc, cfg), apply_budget(tgt, 1.0, cfg), cfg)
    direct, _ = evaluate(m, tgt.subset("test"))
    assert table.cells[0].report == direct


def test_matrix_missing_domain(matrix_data):
    with pytest.raises(DataError):
        run_experiment_matrix([ExperimentPlan("nope", "specific", "source_only")], matrix_data)


def test_patch_model_trains(tiny_split):
    from skinadapt.models import PatchCNNConfig

    pc = PatchCNNConfig(patch_size=9, conv_channels=(4, 4, 4), fc_widths=(8, 1))
    cfg = TrainConfig(steps=3, patches_per_image=32, patch_batch=64)
    m, hist = train_supervised(fresh_model("patch", pc, cfg), tiny_split, cfg)
    assert hist and np.isfinite(hist[-1]["loss"])
    assert evaluate(m, tiny_split.subset("test"))[0].f1 >= 0
