from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .. import seeding
from ..data.augment import augment_arrays, jitter_hsv
from ..data.framing import frame_image, frame_mask
from ..data.patches import extract_training_patches
from ..data.types import Dataset, ImageSample
from ..errors import DataError, NumericError
from ..metrics import MetricReport, aggregate_report, compute_metrics, score_prediction
from ..models.state import ModelState, build_model, forward_tensor, predict_full_image, set_mode
from ..objective import bce_per_sample, dice_loss_per_sample, weighted_batch_loss
from .config import TrainConfig

log = logging.getLogger(__name__)

TRUE, PSEUDO = "true", "pseudo"


@dataclass(frozen=True)
class TrainItem:
    sample: ImageSample  # mask holds the training target (true or pseudo)
    source: str = TRUE


def fresh_model(kind: str, model_config, cfg: TrainConfig) -> ModelState:
    """New model whose initialisation comes from the run's "init" substream."""
    return build_model(kind, model_config, seed=seeding.substream(cfg.seed, "init"))


def _optimizer(params, cfg: TrainConfig):
    if not params:
        raise ValueError("no trainable parameters")
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.lr)
    return torch.optim.SGD(params, lr=cfg.lr, momentum=0.9)


def _check_finite(loss: torch.Tensor, step: int) -> None:
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()} at step {step}")


def _unet_batches(m: ModelState, items: Sequence[TrainItem], cfg: TrainConfig):
    """Yield (x, y, is_pseudo) batches forever, one shuffled pass per epoch."""
    frame = m.config.frame
    framed = []
    for it in items:
        px, t = frame_image(it.sample, frame)
        framed.append((px, frame_mask(it.sample.mask, t), it.source == PSEUDO))
    order_rng = seeding.rng(cfg.seed, "batch")
    aug_rng = seeding.rng(cfg.seed, "augment")
    n = len(framed)
    while True:
        perm = order_rng.permutation(n)
        batches = [perm[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        for idx in batches:
            xs, ys, ps = [], [], []
            for i in idx:
                px, mk, pseudo = framed[i]
                if cfg.augment is not None:
                    px, mk = augment_arrays(px, mk, cfg.augment, aug_rng)
                xs.append(px)
                ys.append(mk)
                ps.append(pseudo)
            yield np.stack(xs), np.stack(ys), np.array(ps), len(batches)


def _patch_batches(m: ModelState, items: Sequence[TrainItem], cfg: TrainConfig):
    """Per epoch: 512 random patches from each image, shuffled into minibatches."""
    size = m.config.patch_size
    order_rng = seeding.rng(cfg.seed, "batch")
    aug_rng = seeding.rng(cfg.seed, "augment")
    patch_seed = seeding.substream(cfg.seed, "patch-sampling")
    epoch = 0
    while True:
        xs, ys, ps = [], [], []
        for k, it in enumerate(items):
            s = it.sample
            u = aug_rng.random(3)
            if cfg.augment is not None and cfg.augment.hsv_enabled:
                a = cfg.augment
                s = ImageSample(s.id, s.domain, jitter_hsv(
                    s.pixels, (2 * u[0] - 1) * a.hue, (2 * u[1] - 1) * a.saturation,
                    (2 * u[2] - 1) * a.value), s.mask)
            ps_set = extract_training_patches(
                s, cfg.patches_per_image, size, seed=patch_seed + 7919 * epoch + k
            )
            xs.append(ps_set.patches)
            ys.append(ps_set.labels)
            ps.append(np.full(len(ps_set), it.source == PSEUDO))
        x, y, p = np.concatenate(xs), np.concatenate(ys), np.concatenate(ps)
        perm = order_rng.permutation(len(y))
        n_batches = math.ceil(len(y) / cfg.patch_batch)
        for b in range(n_batches):
            idx = perm[b * cfg.patch_batch : (b + 1) * cfg.patch_batch]
            yield x[idx], y[idx], p[idx], n_batches
        epoch += 1


def _batch_f1(probs: np.ndarray, masks: np.ndarray) -> float:
    if probs.ndim == 1:
        return compute_metrics(probs >= 0.5, masks).f1
    return float(np.mean([compute_metrics(p >= 0.5, g).f1 for p, g in zip(probs, masks)]))


def train_items(
    m: ModelState,
    items: Sequence[TrainItem],
    cfg: TrainConfig,
    on_step: Optional[Callable[[dict], None]] = None,
):
    """Core loop shared by every strategy. Returns (trained copy of m, history).

    Per batch the loss is L_true + alpha(step) * L_pseudo. unet models use the
    smoothed Dice loss per image; patch models use per-patch binary
    cross-entropy. ``history`` has one entry per epoch.
    """
    if not items:
        raise DataError("training set is empty")
    for it in items:
        if it.sample.mask is None:
            raise DataError(f"{it.sample.id}: training item without a mask")
    m = m.clone()
    history: list[dict] = []
    if cfg.steps == 0:
        return m, history
    opt = _optimizer(m.trainable_parameters(), cfg)
    batches = _unet_batches(m, items, cfg) if m.kind == "unet" else _patch_batches(m, items, cfg)
    set_mode(m, "train")
    losses, f1s, epoch_len = [], [], None
    for step in range(cfg.steps):
        x, y, pseudo, epoch_len = next(batches)
        alpha = cfg.alpha(step)
        probs = forward_tensor(m, torch.from_numpy(x))
        target = torch.from_numpy(y.astype(np.float32))
        if m.kind == "unet":
            per_sample = dice_loss_per_sample(probs, target, cfg.loss)
        else:
            per_sample = bce_per_sample(probs, target)
        loss = weighted_batch_loss(per_sample, torch.from_numpy(pseudo), alpha)
        _check_finite(loss, step)
        opt.zero_grad(set_to_none=True)
        if loss.requires_grad:
            loss.backward()
            opt.step()
        p_np = probs.detach().numpy()
        if on_step is not None:
            on_step({"step": step, "alpha": alpha, "loss": float(loss.detach()), "probs": p_np,
                     "masks": y, "is_pseudo": pseudo})
        losses.append(float(loss.detach()))
        f1s.append(_batch_f1(p_np, y))
        if len(losses) == epoch_len or step == cfg.steps - 1:
            history.append({"epoch": len(history), "step": step + 1, "alpha": alpha,
                            "loss": float(np.mean(losses)), "f1": float(np.mean(f1s))})
            log.debug("epoch %d step %d loss %.4f f1 %.4f", len(history) - 1, step + 1,
                      history[-1]["loss"], history[-1]["f1"])
            losses, f1s = [], []
    set_mode(m, "eval")
    return m, history


def labeled_items(ds: Dataset) -> list[TrainItem]:
    return [TrainItem(ds.samples[i], TRUE) for i in ds.indices("train", labeled=True)]


def train_supervised(m: ModelState, ds: Dataset, cfg: TrainConfig, on_step=None):
    """Train on the labeled train split of ``ds``; returns (model, history)."""
    items = labeled_items(ds)
    if not items:
        raise DataError(f"{ds.domain}: no labeled training samples")
    return train_items(m, items, cfg, on_step)


def predict_samples(m: ModelState, samples: Sequence[ImageSample]) -> list[np.ndarray]:
    return [predict_full_image(m, s) for s in samples]


def evaluate(
    m: ModelState, samples: Sequence[ImageSample], mode: str = "per_image_mean", tau: float = 0.5
) -> tuple[MetricReport, list[MetricReport]]:
    """Score ``m`` on samples that carry masks; returns (aggregate, per-image)."""
    reports = []
    for s in samples:
        if s.mask is None:
            raise DataError(f"{s.id}: cannot evaluate without a mask")
        reports.append(score_prediction(predict_full_image(m, s), s.mask, ident=s.id, tau=tau))
    return aggregate_report(reports, mode), reports


def stage(cfg: TrainConfig, name: str, **changes) -> TrainConfig:
    """Config for a named pipeline stage, with its own seed substream."""
    return replace(cfg, seed=seeding.substream(cfg.seed, name), **changes)
