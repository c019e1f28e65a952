from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from .types import Dataset

PAPER_TEST_FRACTION = 0.15
PAPER_BUDGETS = (0.0, 0.05, 0.10, 0.50, 1.0)


def _stable(x: float) -> float:
    # 100 * 0.15 == 15.000000000000002 in binary floating point
    return round(x, 9)


def split_dataset(ds: Dataset, test_fraction: float = PAPER_TEST_FRACTION, seed: int = 0) -> Dataset:
    """Tag ceil(n * test_fraction) randomly chosen samples as test, the rest as train.

    Train samples keep their labeled flag; test samples are flagged labeled
    when they carry a mask so they can be scored.
    """
    n = len(ds)
    if n < 2:
        raise DataError("need at least 2 samples to split")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = min(n - 1, max(1, math.ceil(_stable(n * test_fraction))))
    perm = np.random.default_rng(seed).permutation(n)
    test = set(perm[:n_test].tolist())
    split = tuple("test" if i in test else "train" for i in range(n))
    labeled = tuple(
        (s.mask is not None) if i in test else lab
        for i, (s, lab) in enumerate(zip(ds.samples, ds.labeled))
    )
    return ds.replace(split=split, labeled=labeled)


def label_count(budget: float, n_train: int) -> int:
    """Number of train samples that keep labels; round-half-up."""
    return int(math.floor(_stable(budget * n_train) + 0.5))


def subsample_labels(ds: Dataset, budget: float, seed: int = 0) -> Dataset:
    """Keep true labels on exactly ``round(budget * |train|)`` train samples.

    Samples are taken as a prefix of one seeded permutation, so the labeled
    set only grows with the budget. Only train samples that carry a mask are
    eligible.
    """
    if not 0.0 <= budget <= 1.0:
        raise ValueError(f"label budget must be in [0, 1], got {budget}")
    train = ds.indices("train")
    eligible = [i for i in train if ds.samples[i].mask is not None]
    k = label_count(budget, len(train))
    if k > len(eligible):
        raise DataError(f"budget {budget} needs {k} masks but only {len(eligible)} train masks exist")
    order = np.random.default_rng(seed).permutation(len(eligible))
    keep = {eligible[j] for j in order[:k].tolist()}
    labeled = list(ds.labeled)
    for i in train:
        labeled[i] = i in keep
    return ds.replace(labeled=tuple(labeled))
