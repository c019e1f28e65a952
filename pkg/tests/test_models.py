import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from skinadapt.data import ImageSample, extract_training_patches
from skinadapt.errors import DataError
from skinadapt.metrics import compute_metrics
from skinadapt.models import (
    PatchCNNConfig,
    UNetConfig,
    build_patch_cnn,
    build_unet,
    patch_cnn_forward,
    predict_full_image,
    set_trainable,
    unet_forward,
)
from skinadapt.models.state import forward_tensor, set_mode
from skinadapt.objective import dice_loss_per_sample

from .gradcheck import unet_fd_check

SMALL_PATCH = PatchCNNConfig(patch_size=11, conv_channels=(4, 8, 8), fc_widths=(16, 1))


def params_equal(a, b):
    sa, sb = a.snapshot(), b.snapshot()
    return sa.keys() == sb.keys() and all(np.array_equal(sa[k], sb[k]) for k in sa)


def test_unet_shapes_and_widths(rng):
    cfg = UNetConfig()
    assert cfg.widths == (8, 16, 32)
    m = build_unet(cfg, seed=0)
    out = unet_forward(m, rng.random((2, 64, 64, 3)))
    assert out.shape == (2, 64, 64)
    assert out.min() > 0 and out.max() < 1


def test_unet_config_validation():
    with pytest.raises(DataError):
        UNetConfig(levels=3, frame=(30, 64))
    with pytest.raises(ValueError):
        UNetConfig(levels=1)
    paper = UNetConfig.paper_scale()
    assert paper.levels == 7 and paper.frame == (768, 768)


@settings(max_examples=8, deadline=None)
@given(levels=st.integers(2, 4), base=st.integers(1, 4), k=st.integers(1, 3), n=st.integers(1, 2))
def test_unet_shape_property(levels, base, k, n):
    side = k * 2 ** (levels - 1)
    m = build_unet(UNetConfig(levels=levels, base_channels=base, frame=(side, side)), seed=1)
    x = np.random.default_rng(0).random((n, side, side, 3))
    assert unet_forward(m, x).shape == (n, side, side)


def test_same_seed_same_parameters():
    assert params_equal(build_unet(seed=3), build_unet(seed=3))
    assert not params_equal(build_unet(seed=3), build_unet(seed=4))
    assert params_equal(build_patch_cnn(SMALL_PATCH, 2), build_patch_cnn(SMALL_PATCH, 2))


def test_eval_forward_is_pure(rng):
    m = build_unet(seed=0)
    x = rng.random((2, 64, 64, 3))
    unet_forward(m, x, "train")  # populate running stats
    before = m.snapshot()
    a = unet_forward(m, x)
    b = unet_forward(m, x)
    assert np.array_equal(a, b)
    assert params_equal(m, m) and all(np.array_equal(before[k], v) for k, v in m.snapshot().items())


def test_train_mode_updates_running_stats(rng):
    m = build_unet(seed=0)
    before = m.snapshot()["enc.0.1.running_mean"].copy()
    unet_forward(m, rng.random((2, 64, 64, 3)), "train")
    assert not np.array_equal(before, m.snapshot()["enc.0.1.running_mean"])


def test_forward_dimension_errors(rng):
    with pytest.raises(DataError):
        unet_forward(build_unet(seed=0), rng.random((1, 32, 32, 3)))
    with pytest.raises(DataError):
        patch_cnn_forward(build_patch_cnn(SMALL_PATCH, 0), rng.random((3, 9, 9, 3)))


def test_patch_cnn_outputs_and_permutation(rng):
    m = build_patch_cnn(PatchCNNConfig(), seed=0)
    x = rng.random((6, 35, 35, 3))
    out = patch_cnn_forward(m, x)
    assert out.shape == (6,) and out.min() > 0 and out.max() < 1
    perm = rng.permutation(6)
    assert np.allclose(patch_cnn_forward(m, x[perm]), out[perm], atol=1e-6)


def test_patch_config_validation():
    with pytest.raises(ValueError):
        PatchCNNConfig(patch_size=34)


def test_untrained_patch_model_is_chance_like(easy_domain):
    from skinadapt.data import make_synthetic_domain

    ds = make_synthetic_domain(easy_domain, 4, (48, 48), seed=0)
    m = build_patch_cnn(SMALL_PATCH, seed=0)
    probs, labels = [], []
    for i, s in enumerate(ds.samples):
        ps = extract_training_patches(s, 100, 11, seed=i, balanced=True)
        probs.append(patch_cnn_forward(m, ps.patches))
        labels.append(ps.labels)
    f1 = compute_metrics(np.concatenate(probs) >= 0.5, np.concatenate(labels)).f1
    assert 0.2 <= f1 <= 0.8


def test_patch_prediction_border_and_interior(rng):
    m = build_patch_cnn(PatchCNNConfig(), seed=0)
    s = ImageSample("x", "d", rng.random((100, 100, 3)).astype(np.float32))
    pred = predict_full_image(m, s)
    assert pred.shape == (100, 100)
    border = np.ones((100, 100), bool)
    border[17:83, 17:83] = False
    assert not pred[border].any()
    assert pred[~border].min() > 0
    ys, xs = rng.integers(17, 83, 50), rng.integers(17, 83, 50)
    patches = np.stack([s.pixels[y - 17 : y + 18, x - 17 : x + 18] for y, x in zip(ys, xs)])
    assert np.allclose(patch_cnn_forward(m, patches), pred[ys, xs], atol=1e-5)


def test_patch_prediction_too_small(rng):
    with pytest.raises(DataError):
        predict_full_image(build_patch_cnn(PatchCNNConfig(), 0), rng.random((20, 50, 3)))


def test_unet_prediction_original_size(rng):
    m = build_unet(UNetConfig(levels=2, base_channels=2, frame=(16, 16)), seed=0)
    s = ImageSample("x", "d", rng.random((10, 10, 3)).astype(np.float32))
    pred = predict_full_image(m, s)
    assert pred.shape == (10, 10)
    x = np.zeros((1, 16, 16, 3), np.float32)
    x[0, 3:13, 3:13] = s.pixels
    assert np.allclose(pred, unet_forward(m, x)[0, 3:13, 3:13], atol=1e-6)


def one_step(m, rng):
    opt = torch.optim.SGD(m.trainable_parameters(), lr=0.1)
    set_mode(m, "train")
    x = torch.tensor(rng.random((2, 64, 64, 3)), dtype=torch.float32)
    g = torch.tensor((rng.random((2, 64, 64)) < 0.5).astype(np.float32))
    loss = dice_loss_per_sample(forward_tensor(m, x), g).mean()
    opt.zero_grad()
    loss.backward()
    opt.step()


def test_freeze_all_but_head(rng):
    m = build_unet(seed=0)
    for g in m.groups:
        set_trainable(m, g, g == "head")
    before = m.snapshot()
    one_step(m, rng)
    after = m.snapshot()
    for name, p in m.net.named_parameters():
        changed = not np.array_equal(before[name], after[name])
        assert changed == (m.group_of(name) == "head"), name
    # frozen groups keep their batch-norm statistics
    assert np.array_equal(before["enc.0.1.running_mean"], after["enc.0.1.running_mean"])


def test_unfreeze_gives_gradients_everywhere(rng):
    m = build_unet(seed=0)
    for g in m.groups:
        set_trainable(m, g, False)
    assert not m.trainable_parameters()
    for g in m.groups:
        set_trainable(m, g, True)
    assert all(m.trainable.values())
    set_mode(m, "train")
    x = torch.tensor(rng.random((2, 64, 64, 3)), dtype=torch.float32)
    g = torch.tensor((rng.random((2, 64, 64)) < 0.5).astype(np.float32))
    dice_loss_per_sample(forward_tensor(m, x), g).mean().backward()
    for name, p in m.net.named_parameters():
        assert p.grad is not None and p.grad.abs().sum() > 0, name


def test_unknown_group():
    with pytest.raises(KeyError):
        set_trainable(build_unet(seed=0), "middle", False)


def test_every_parameter_in_one_group():
    for m in (build_unet(seed=0), build_patch_cnn(SMALL_PATCH, 0)):
        for name, _ in m.net.named_parameters():
            assert m.group_of(name) in m.groups


def test_unet_gradient_finite_differences():
    ok, err = unet_fd_check()
    assert ok, err
