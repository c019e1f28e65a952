from .augment import augment_sample
from .framing import frame_image, frame_mask, unframe_prediction
from .io import binarize_mask, load_dataset, save_dataset
from .patches import PatchSet, extract_training_patches
from .split import PAPER_BUDGETS, split_dataset, subsample_labels
from .synthetic import PRESETS, REFERENCE_PAIR, DomainDescriptor, make_synthetic_domain, reference_pair
from .types import AugmentConfig, Dataset, FrameTransform, ImageSample

__all__ = [
    "AugmentConfig",
    "Dataset",
    "DomainDescriptor",
    "FrameTransform",
    "ImageSample",
    "PAPER_BUDGETS",
    "PRESETS",
    "REFERENCE_PAIR",
    "PatchSet",
    "augment_sample",
    "binarize_mask",
    "extract_training_patches",
    "frame_image",
    "frame_mask",
    "load_dataset",
    "make_synthetic_domain",
    "reference_pair",
    "save_dataset",
    "split_dataset",
    "subsample_labels",
    "unframe_prediction",
]
