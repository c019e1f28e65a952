from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from ..data.io import MASK_THRESHOLD
from ..data.split import PAPER_BUDGETS
from ..data.types import Dataset
from ..errors import DataError
from ..metrics import MetricReport
from ..models.nets import BN_MOMENTUM, PatchCNNConfig, UNetConfig
from .config import APPROACHES, ExperimentPlan, TrainConfig, cell_is_valid
from .strategies import (
    apply_budget,
    combined_pipeline,
    fine_tune,
    pseudo_label_model,
    train_source_model,
)
from .train import evaluate, fresh_model, train_supervised

log = logging.getLogger(__name__)

AGGREGATION = "per_image_mean"


@dataclass(frozen=True)
class CellResult:
    source: Optional[str]
    target: str
    approach: str
    budget: float
    seed: int
    report: MetricReport
    note: str = ""

    @property
    def mean_f1(self) -> float:
        return self.report.f1


@dataclass
class ResultTable:
    cells: list = field(default_factory=list)
    budgets: tuple = PAPER_BUDGETS
    aggregation: str = AGGREGATION

    def add(self, cell: CellResult) -> None:
        self.cells.append(cell)

    def cell(self, source, target, approach, budget) -> Optional[CellResult]:
        for c in self.cells:
            if (c.source, c.target, c.approach) == (source, target, approach) and abs(c.budget - budget) < 1e-12:
                return c
        return None

    def row_keys(self) -> list[tuple]:
        """Rows in table order: target-only rows first, then per (source, target)."""
        seen = []
        for c in self.cells:
            key = (c.source, c.target, c.approach)
            if key not in seen:
                seen.append(key)
        target_only = [k for k in seen if k[2] == "target_only"]
        pairs = []
        for k in seen:
            if k[2] != "target_only" and (k[0], k[1]) not in pairs:
                pairs.append((k[0], k[1]))
        rest = [
            (s, t, a) for s, t in pairs for a in APPROACHES if (s, t, a) in seen
        ]
        return target_only + rest

    def __len__(self):
        return len(self.cells)


def config_echo(plans: Sequence[ExperimentPlan]) -> dict:
    """Every tunable value that influences the results, for the run record."""
    first = plans[0]
    mcfg = first.model_config or (UNetConfig() if first.model_kind == "unet" else PatchCNNConfig())
    return {
        "aggregation": AGGREGATION,
        "mask_threshold": MASK_THRESHOLD,
        "prediction_threshold": 0.5,
        "batchnorm_momentum_torch": BN_MOMENTUM,
        "model_kind": first.model_kind,
        "model_config": asdict(mcfg),
        "train": asdict(first.train),
        "combined_budget0": "fine-tune skipped",
        "plans": [
            {"source": p.source, "target": p.target, "approach": p.approach,
             "budget": p.budget, "seed": p.train.seed}
            for p in plans
        ],
    }


def _source_key(p: ExperimentPlan):
    return (p.source, p.model_kind, p.model_config, p.train)


def run_experiment_matrix(
    plans: Sequence[ExperimentPlan],
    datasets: Mapping[str, Dataset],
    workers: int = 1,
) -> ResultTable:
    """Run every plan and collect target-test mean F1 cells.

    Source models (model A) are trained once per (source, architecture,
    training config) and shared by the plans that need them.
    """
    plans = list(plans)
    if not plans:
        raise ValueError("no experiment plans given")
    for p in plans:
        for name in (p.source, p.target):
            if name is not None and name not in datasets:
                raise DataError(f"dataset for domain {name!r} was not provided")
        if not cell_is_valid(p.approach, p.budget):
            raise ValueError(f"invalid plan cell {p.approach} @ {p.budget}")

    source_models = {}
    for p in plans:
        if p.approach != "target_only":
            key = _source_key(p)
            if key not in source_models:
                log.info("training source model on %s", p.source)
                source_models[key] = train_source_model(
                    datasets[p.source], p.train, p.model_kind, p.model_config
                )

    def run(p: ExperimentPlan) -> CellResult:
        cfg = p.train
        tgt = apply_budget(datasets[p.target], p.budget, cfg)
        note = ""
        if p.approach == "target_only":
            m, _ = train_supervised(fresh_model(p.model_kind, p.model_config, cfg), tgt, cfg)
        else:
            a = source_models[_source_key(p)]
            if p.approach == "source_only":
                m = a
            elif p.approach == "fine_tune":
                m = fine_tune(a, tgt, cfg)
            elif p.approach == "pseudo_label":
                m, _ = pseudo_label_model(tgt, cfg, a)
            else:
                m = combined_pipeline(datasets[p.source], datasets[p.target], p.budget, cfg,
                                      p.model_kind, p.model_config, source_model=a)
                if p.budget == 0:
                    note = "fine-tune skipped"
        agg, _ = evaluate(m, tgt.subset("test"), AGGREGATION)
        log.info("%s -> %s %s @ %.2f: F1 %.4f", p.source, p.target, p.approach, p.budget, agg.f1)
        return CellResult(p.source, p.target, p.approach, p.budget, cfg.seed, agg, note)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, plans))
    else:
        results = [run(p) for p in plans]
    table = ResultTable()
    for r in results:
        table.add(r)
    return table


def table6_plans(
    pairs: Sequence[tuple[str, str]],
    budgets: Sequence[float] = PAPER_BUDGETS,
    approaches: Sequence[str] = APPROACHES,
    train: TrainConfig = TrainConfig(),
    model_kind: str = "unet",
    model_config=None,
) -> list[ExperimentPlan]:
    """Every filled cell of the result layout for the given source->target pairs."""
    plans = []
    targets = []
    for _, t in pairs:
        if t not in targets:
            targets.append(t)
    if "target_only" in approaches:
        for t in targets:
            for b in budgets:
                if cell_is_valid("target_only", b):
                    plans.append(ExperimentPlan(None, t, "target_only", b, model_kind, train, model_config))
    for s, t in pairs:
        for a in approaches:
            if a == "target_only":
                continue
            for b in budgets:
                if cell_is_valid(a, b):
                    plans.append(ExperimentPlan(s, t, a, b, model_kind, train, model_config))
    return plans
