from .nets import PatchCNNConfig, UNetConfig
from .persist import load_params, save_params
from .state import (
    ModelState,
    build_model,
    build_patch_cnn,
    build_unet,
    patch_cnn_forward,
    predict_full_image,
    set_trainable,
    unet_forward,
)

__all__ = [
    "ModelState",
    "PatchCNNConfig",
    "UNetConfig",
    "build_model",
    "build_patch_cnn",
    "build_unet",
    "load_params",
    "patch_cnn_forward",
    "predict_full_image",
    "save_params",
    "set_trainable",
    "unet_forward",
]
