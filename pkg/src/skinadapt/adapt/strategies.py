"""The three cross-domain strategies.

fine_tune          source model -> head-only phase -> full training on target labels
pseudo_label       source model labels the target; a new model trains on them
combined_pipeline  pseudo-label model B -> fine-tune -> relabel -> one
                   in-domain pseudo-label round -> model C
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .. import seeding
from ..data.split import subsample_labels
from ..data.types import Dataset
from ..errors import DataError
from ..models.state import ModelState, set_trainable
from .config import TrainConfig
from .pseudo import PseudoLabeledSet, target_training_set, train_with_pseudo_labels
from .train import fresh_model, labeled_items, stage, train_items, train_supervised

log = logging.getLogger(__name__)


def apply_budget(target: Dataset, budget: float, cfg: TrainConfig) -> Dataset:
    """Hide all but ``round(budget * |train|)`` target train labels."""
    return subsample_labels(target, budget, seed=seeding.substream(cfg.seed, "labels"))


def train_source_model(source: Dataset, cfg: TrainConfig, kind: str = "unet", model_config=None) -> ModelState:
    """Model A: supervised training on the fully labeled source train split."""
    train_idx = source.indices("train")
    if not train_idx or not all(source.labeled[i] for i in train_idx):
        raise DataError(f"source domain {source.domain!r} must be fully labeled")
    scfg = stage(cfg, "source")
    m, _ = train_supervised(fresh_model(kind, model_config, scfg), source, scfg)
    return m


def fine_tune(m: ModelState, target: Dataset, cfg: TrainConfig) -> ModelState:
    """Head-only training for ``cfg.finetune_head_steps``, then all layers for ``cfg.steps``."""
    items = labeled_items(target)
    if not items:
        raise DataError("fine-tuning needs at least one labeled target training sample (budget > 0)")
    m = m.clone()
    for g in m.groups:
        set_trainable(m, g, g == "head")
    m, _ = train_items(m, items, stage(cfg, "finetune-head", steps=cfg.finetune_head_steps))
    for g in m.groups:
        set_trainable(m, g, True)
    m, _ = train_items(m, items, stage(cfg, "finetune-all"))
    return m


def pseudo_label_model(
    target: Dataset, cfg: TrainConfig, source_model: ModelState
) -> tuple[ModelState, PseudoLabeledSet]:
    """Model B: trained on the target train split, pseudo masks from ``source_model``."""
    pset = target_training_set(target, source_model, cfg.tau)
    m, _ = train_with_pseudo_labels(
        pset, stage(cfg, "pseudo-b"), source_model, fresh=not cfg.init_from_source
    )
    return m, pset


@dataclass
class CombinedResult:
    model_c: ModelState
    model_a: ModelState
    model_b: ModelState
    fine_tuned: Optional[ModelState] = None
    notes: list = field(default_factory=list)


def combined_pipeline(
    source: Dataset,
    target: Dataset,
    budget: float,
    cfg: TrainConfig,
    kind: str = "unet",
    model_config=None,
    source_model: Optional[ModelState] = None,
    model_b: Optional[ModelState] = None,
    details: bool = False,
):
    """Model C of the combined approach.

    ``target`` is subsampled to ``budget`` here. At budget 0 there is nothing
    to fine-tune on, so step 4 is skipped and steps 5-6 become a plain
    self-training refinement of model B. ``source_model``/``model_b`` let a
    caller reuse models it already trained with the same settings.
    """
    target = apply_budget(target, budget, cfg)
    notes = []
    a = source_model if source_model is not None else train_source_model(source, cfg, kind, model_config)
    b = model_b if model_b is not None else pseudo_label_model(target, cfg, a)[0]
    if target.indices("train", labeled=True):
        tuned = fine_tune(b, target, stage(cfg, "combined-ft"))
    else:
        tuned = None
        notes.append("fine-tune skipped (no target labels)")
        log.info("combined at budget %s: fine-tune skipped", budget)
    relabeler = tuned if tuned is not None else b
    pset = target_training_set(target, relabeler, cfg.tau)
    c, _ = train_with_pseudo_labels(pset, stage(cfg, "combined-c"), relabeler, fresh=False)
    if details:
        return CombinedResult(c, a, b, tuned, notes)
    return c
