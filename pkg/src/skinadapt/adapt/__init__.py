from .config import APPROACHES, ExperimentPlan, TrainConfig, cell_is_valid
from .experiment import CellResult, ResultTable, config_echo, run_experiment_matrix, table6_plans
from .pseudo import PseudoLabeledSet, generate_pseudo_labels, target_training_set, train_with_pseudo_labels
from .strategies import apply_budget, combined_pipeline, fine_tune, pseudo_label_model, train_source_model
from .train import TrainItem, evaluate, fresh_model, train_items, train_supervised

__all__ = [
    "APPROACHES",
    "CellResult",
    "ExperimentPlan",
    "PseudoLabeledSet",
    "ResultTable",
    "TrainConfig",
    "TrainItem",
    "apply_budget",
    "cell_is_valid",
    "combined_pipeline",
    "config_echo",
    "evaluate",
    "fine_tune",
    "fresh_model",
    "generate_pseudo_labels",
    "pseudo_label_model",
    "run_experiment_matrix",
    "table6_plans",
    "target_training_set",
    "train_items",
    "train_source_model",
    "train_supervised",
    "train_with_pseudo_labels",
]
