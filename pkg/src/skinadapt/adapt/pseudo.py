from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data.types import Dataset, ImageSample
from ..errors import DataError
from ..models.persist import params_to_bytes
from ..models.state import ModelState, predict_full_image
from .config import TrainConfig
from .train import PSEUDO, TRUE, TrainItem, fresh_model, train_items


def model_id(m: ModelState) -> str:
    return hashlib.sha1(params_to_bytes(m)).hexdigest()[:12]


@dataclass(frozen=True)
class PseudoLabeledSet:
    samples: tuple[ImageSample, ...]
    sources: tuple[str, ...]
    generator: str = ""
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.samples) != len(self.sources):
            raise ValueError("one mask source tag per sample is required")
        for s, src in zip(self.samples, self.sources):
            if src not in (TRUE, PSEUDO):
                raise ValueError(f"unknown mask source {src!r}")
            if s.mask is None:
                raise ValueError(f"{s.id}: every sample needs a (true or pseudo) mask")

    def __len__(self):
        return len(self.samples)

    def items(self) -> list[TrainItem]:
        return [TrainItem(s, src) for s, src in zip(self.samples, self.sources)]

    @property
    def n_pseudo(self) -> int:
        return sum(src == PSEUDO for src in self.sources)


def pseudo_mask(prob: np.ndarray, tau: float) -> np.ndarray:
    return (np.asarray(prob) >= tau).astype(np.uint8)


def generate_pseudo_labels(m: ModelState, samples: Sequence[ImageSample], tau: float = 0.5) -> PseudoLabeledSet:
    """Hard labels ``prob >= tau`` from ``m`` replace whatever mask the samples had."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be in (0, 1)")
    out = [s.with_mask(pseudo_mask(predict_full_image(m, s), tau)) for s in samples]
    return PseudoLabeledSet(tuple(out), (PSEUDO,) * len(out), model_id(m), tau)


def target_training_set(target: Dataset, m: ModelState | None, tau: float = 0.5) -> PseudoLabeledSet:
    """Train split of ``target``: true masks where labeled, pseudo masks elsewhere."""
    samples, sources = [], []
    unlabeled = [target.samples[i] for i in target.indices("train", labeled=False)]
    generated = None
    if unlabeled:
        if m is None:
            raise DataError("unlabeled target samples need a model to pseudo-label them")
        generated = generate_pseudo_labels(m, unlabeled, tau)
        pseudo = iter(generated.samples)
    for i in target.indices("train"):
        if target.labeled[i]:
            samples.append(target.samples[i])
            sources.append(TRUE)
        else:
            samples.append(next(pseudo))
            sources.append(PSEUDO)
    return PseudoLabeledSet(
        tuple(samples), tuple(sources), generated.generator if generated else "", tau
    )


def train_with_pseudo_labels(
    train_set: PseudoLabeledSet, cfg: TrainConfig, init: ModelState, fresh: bool = True, on_step=None
):
    """Train on true + pseudo masks with the ramped pseudo-label weight.

    ``fresh=True`` starts from a new model of the same architecture as
    ``init``; otherwise training continues from ``init``'s parameters.
    Returns (model, history).
    """
    if len(train_set) == 0:
        raise DataError("pseudo-label training set is empty")
    start = fresh_model(init.kind, init.config, cfg) if fresh else init
    return train_items(start, train_set.items(), cfg, on_step)
