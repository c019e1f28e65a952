from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import torch
import torch.nn as nn

from ..data.framing import frame_image, unframe_prediction
from ..data.patches import sliding_patches
from ..data.types import ImageSample
from ..errors import DataError
from .nets import PatchCNN, PatchCNNConfig, UNet, UNetConfig, init_parameters

GROUPS = {
    "unet": {"encoder": ("enc.", "bottleneck."), "decoder": ("up.", "dec."), "head": ("head.",)},
    "patch": {"features": ("features.",), "head": ("head.",)},
}

Config = Union[UNetConfig, PatchCNNConfig]


@dataclass
class ModelState:
    kind: str
    config: Config
    net: nn.Module
    trainable: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GROUPS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.trainable:
            self.trainable = {g: True for g in GROUPS[self.kind]}

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(GROUPS[self.kind])

    def group_of(self, name: str) -> str:
        for group, prefixes in GROUPS[self.kind].items():
            if name.startswith(prefixes):
                return group
        raise KeyError(f"parameter {name!r} belongs to no group")

    def named_parameters(self):
        return self.net.named_parameters()

    def group_modules(self, group: str):
        prefixes = GROUPS[self.kind][group]
        return [m for n, m in self.net.named_modules() if n and (n + ".").startswith(prefixes)]

    def trainable_parameters(self) -> list[torch.Tensor]:
        return [p for n, p in self.net.named_parameters() if self.trainable[self.group_of(n)]]

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copy of every parameter and buffer, keyed by layer path."""
        return {k: v.detach().cpu().numpy().copy() for k, v in self.net.state_dict().items()}

    def clone(self) -> "ModelState":
        return ModelState(self.kind, self.config, copy.deepcopy(self.net), dict(self.trainable))


def build_unet(cfg: UNetConfig = UNetConfig(), seed: int = 0) -> ModelState:
    net = UNet(cfg)
    init_parameters(net, seed)
    return ModelState("unet", cfg, net)


def build_patch_cnn(cfg: PatchCNNConfig = PatchCNNConfig(), seed: int = 0) -> ModelState:
    net = PatchCNN(cfg)
    init_parameters(net, seed)
    return ModelState("patch", cfg, net)


def build_model(kind: str, cfg: Config | None = None, seed: int = 0) -> ModelState:
    if kind == "unet":
        return build_unet(cfg or UNetConfig(), seed)
    if kind == "patch":
        return build_patch_cnn(cfg or PatchCNNConfig(), seed)
    raise ValueError(f"unknown model kind {kind!r}")


def set_trainable(m: ModelState, group: str, flag: bool) -> ModelState:
    """Mark a layer group as trainable or frozen (in place; returns ``m``)."""
    if group not in GROUPS[m.kind]:
        raise KeyError(f"unknown group {group!r} for {m.kind}; expected one of {m.groups}")
    m.trainable[group] = bool(flag)
    for name, p in m.net.named_parameters():
        if m.group_of(name) == group:
            p.requires_grad_(bool(flag))
    return m


def set_mode(m: ModelState, mode: str) -> None:
    """Switch train/eval; frozen groups keep their batch-norm statistics fixed."""
    if mode == "eval":
        m.net.eval()
    elif mode == "train":
        m.net.train()
        for group, flag in m.trainable.items():
            if not flag:
                for mod in m.group_modules(group):
                    if isinstance(mod, nn.modules.batchnorm._BatchNorm):
                        mod.eval()
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


def forward_tensor(m: ModelState, x: torch.Tensor) -> torch.Tensor:
    """Channels-last batch in, probabilities out (N x H x W or N)."""
    if m.kind == "unet":
        if x.dim() != 4 or tuple(x.shape[1:]) != (*m.config.frame, 3):
            raise DataError(f"expected N x {m.config.frame[0]} x {m.config.frame[1]} x 3, got {tuple(x.shape)}")
    else:
        s = m.config.patch_size
        if x.dim() != 4 or tuple(x.shape[1:]) != (s, s, 3):
            raise DataError(f"expected N x {s} x {s} x 3 patches, got {tuple(x.shape)}")
    return m.net(x.permute(0, 3, 1, 2))


def _numpy_forward(m: ModelState, batch, mode: str) -> np.ndarray:
    x = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
    set_mode(m, mode)
    with torch.no_grad():
        out = forward_tensor(m, x)
    return out.numpy()


def unet_forward(m: ModelState, batch, mode: str = "eval") -> np.ndarray:
    """N x Hf x Wf x 3 in, N x Hf x Wf probabilities out.

    ``mode="train"`` normalizes with batch statistics and updates the running
    estimates; ``"eval"`` uses the stored estimates and leaves ``m`` untouched.
    """
    if m.kind != "unet":
        raise ValueError("unet_forward needs a unet model")
    return _numpy_forward(m, batch, mode)


def patch_cnn_forward(m: ModelState, patches, mode: str = "eval") -> np.ndarray:
    if m.kind != "patch":
        raise ValueError("patch_cnn_forward needs a patch model")
    return _numpy_forward(m, patches, mode)


def predict_full_image(m: ModelState, sample: ImageSample | np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Probability map at the sample's original size.

    unet: frame, one-shot forward, unframe. patch: one prediction per pixel
    whose full patch fits, with the border of width patch_size // 2 set to 0.
    """
    pixels = sample.pixels if isinstance(sample, ImageSample) else np.asarray(sample, np.float32)
    if m.kind == "unet":
        framed, t = frame_image(pixels, m.config.frame)
        pred = unet_forward(m, framed[None], "eval")[0]
        return unframe_prediction(pred, t)
    s = m.config.patch_size
    windows = sliding_patches(pixels, s)
    hh, ww = windows.shape[:2]
    flat = windows.reshape(hh * ww, s, s, 3)
    probs = np.concatenate(
        [patch_cnn_forward(m, flat[i : i + chunk]) for i in range(0, len(flat), chunk)]
    )
    out = np.zeros(pixels.shape[:2], dtype=np.float32)
    r = s // 2
    out[r : r + hh, r : r + ww] = probs.reshape(hh, ww)
    return out
