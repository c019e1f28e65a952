from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Union

from ..data.split import PAPER_BUDGETS
from ..data.types import AugmentConfig
from ..metrics import LossConfig
from ..models.nets import PatchCNNConfig, UNetConfig

APPROACHES = ("target_only", "source_only", "fine_tune", "pseudo_label", "combined")
APPROACH_TITLES = {
    "target_only": "Target only",
    "source_only": "Source only",
    "fine_tune": "Fine-tuning only",
    "pseudo_label": "Cross-domain pseudo-label only",
    "combined": "Combined approach",
}


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings shared by every training stage.

    ``ramp_start``/``ramp_end`` are fractions of ``steps``: the pseudo-label
    weight is 0 before ramp_start, rises linearly to ``alpha_final`` at
    ramp_end and stays there.
    """

    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 4
    steps: int = 300
    seed: int = 0
    augment: Optional[AugmentConfig] = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    tau: float = 0.5
    ramp_start: float = 0.1
    ramp_end: float = 0.4
    alpha_final: float = 1.0
    finetune_head_steps: int = 50
    patches_per_image: int = 512
    patch_batch: int = 256
    init_from_source: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if not 0.0 <= self.ramp_start <= self.ramp_end:
            raise ValueError("need 0 <= ramp_start <= ramp_end")
        if self.alpha_final < 0:
            raise ValueError("alpha_final must be >= 0")
        if self.steps < 0 or self.finetune_head_steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")

    def alpha(self, step: int) -> float:
        t1 = self.ramp_start * self.steps
        t2 = self.ramp_end * self.steps
        if step < t1:
            return 0.0
        if step >= t2:
            return self.alpha_final
        return self.alpha_final * (step - t1) / (t2 - t1)

    def as_dict(self) -> dict:
        return asdict(self)


def cell_is_valid(approach: str, budget: float) -> bool:
    """Whether (approach, budget) is a filled cell of the result table layout."""
    if approach == "source_only":
        return budget == 0.0
    if approach in ("target_only", "fine_tune"):
        return budget > 0.0
    if approach in ("pseudo_label", "combined"):
        return budget < 1.0
    return False


@dataclass(frozen=True)
class ExperimentPlan:
    source: Optional[str]
    target: str
    approach: str
    budget: float = 0.0
    model_kind: str = "unet"
    train: TrainConfig = field(default_factory=TrainConfig)
    model_config: Optional[Union[UNetConfig, PatchCNNConfig]] = None

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"unknown approach {self.approach!r}")
        if not 0.0 <= self.budget <= 1.0:
            raise ValueError(f"budget must be in [0, 1], got {self.budget}")
        if self.approach == "source_only":
            object.__setattr__(self, "budget", 0.0)
        if self.approach == "target_only":
            object.__setattr__(self, "source", None)
        elif self.source is None:
            raise ValueError(f"{self.approach} needs a source domain")
        if self.approach == "fine_tune" and self.budget <= 0:
            raise ValueError("fine_tune needs a label budget > 0")
        if not cell_is_valid(self.approach, self.budget):
            raise ValueError(f"{self.approach} has no cell at budget {self.budget}")

    @property
    def row_key(self) -> tuple:
        return (self.source, self.target, self.approach)


__all__ = [
    "APPROACHES",
    "APPROACH_TITLES",
    "ExperimentPlan",
    "PAPER_BUDGETS",
    "TrainConfig",
    "cell_is_valid",
]
