from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import DataError

# torch momentum m means running = (1 - m) * running + m * batch
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 3
    base_channels: int = 8
    frame: tuple[int, int] = (64, 64)
    batch_norm: bool = True
    upsample: str = "transpose"  # or "nearest" (nearest-neighbour + 3x3 conv)

    def __post_init__(self):
        object.__setattr__(self, "frame", tuple(int(v) for v in self.frame))
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.upsample not in ("transpose", "nearest"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")
        k = 2 ** (self.levels - 1)
        if self.frame[0] % k or self.frame[1] % k or min(self.frame) <= 0:
            raise DataError(f"frame {self.frame} must be divisible by 2^(levels-1) = {k}")

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.base_channels * 2**i for i in range(self.levels))

    @classmethod
    def paper_scale(cls) -> "UNetConfig":
        return cls(levels=7, base_channels=8, frame=(768, 768))


@dataclass(frozen=True)
class PatchCNNConfig:
    patch_size: int = 35
    conv_channels: tuple[int, int, int] = (32, 64, 128)
    fc_widths: tuple[int, int] = (128, 1)
    kernel_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))
        if self.patch_size % 2 == 0 or self.patch_size < 9:
            raise ValueError(f"patch size must be odd and >= 9, got {self.patch_size}")
        if len(self.conv_channels) != 3:
            raise ValueError("the patch CNN has exactly 3 convolutional layers")
        if len(self.fc_widths) != 2 or self.fc_widths[1] != 1:
            raise ValueError("the patch CNN has exactly 2 fully connected layers ending in 1 unit")

    @property
    def feature_side(self) -> int:
        side = self.patch_size
        for _ in range(3):
            side //= 2
        return side


def _double_conv(cin: int, cout: int, batch_norm: bool) -> nn.Sequential:
    layers = []
    for c_in in (cin, cout):
        layers.append(nn.Conv2d(c_in, cout, 3, padding=1, bias=not batch_norm))
        if batch_norm:
            layers.append(nn.BatchNorm2d(cout, momentum=BN_MOMENTUM))
        layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class UNet(nn.Module):
    """Encoder-decoder with skip connections; one sigmoid output channel."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        w = cfg.widths
        self.enc = nn.ModuleList()
        cin = 3
        for c in w[:-1]:
            self.enc.append(_double_conv(cin, c, cfg.batch_norm))
            cin = c
        self.bottleneck = _double_conv(w[-2], w[-1], cfg.batch_norm)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for j in reversed(range(len(w) - 1)):
            if cfg.upsample == "transpose":
                self.up.append(nn.ConvTranspose2d(w[j + 1], w[j], 2, stride=2))
            else:
                self.up.append(
                    nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                  nn.Conv2d(w[j + 1], w[j], 3, padding=1))
                )
            self.dec.append(_double_conv(2 * w[j], w[j], cfg.batch_norm))
        self.head = nn.Conv2d(w[0], 1, 1)

    def forward(self, x):  # x: N x 3 x H x W
        skips = []
        for block in self.enc:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1))
        return torch.sigmoid(self.head(x))[:, 0]


class PatchCNN(nn.Module):
    """Three conv + ReLU + max-pool stages, then two fully connected layers."""

    def __init__(self, cfg: PatchCNNConfig):
        super().__init__()
        k = cfg.kernel_size
        c1, c2, c3 = cfg.conv_channels
        self.features = nn.Sequential(
            nn.Conv2d(3, c1, k, padding=k // 2), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, k, padding=k // 2), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c2, c3, k, padding=k // 2), nn.ReLU(), nn.MaxPool2d(2),
        )
        flat = c3 * cfg.feature_side**2
        self.head = nn.Sequential(
            nn.Linear(flat, cfg.fc_widths[0]), nn.ReLU(), nn.Linear(cfg.fc_widths[0], 1)
        )

    def forward(self, x):  # x: N x 3 x s x s
        return torch.sigmoid(self.head(torch.flatten(self.features(x), 1)))[:, 0]


def _fan_in(module: nn.Module) -> int:
    w = module.weight
    if isinstance(module, nn.ConvTranspose2d):
        # each output pixel of a stride-2, 2x2 transposed conv sees in_channels inputs
        return w.shape[0]
    return w.shape[1] * (w[0, 0].numel() if w.dim() > 2 else 1)


@torch.no_grad()
def init_parameters(net: nn.Module, seed: int) -> None:
    """Fan-in scaled uniform weights, zero biases, unit/zero batch-norm affine."""
    gen = torch.Generator().manual_seed(int(seed))
    for module in net.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            bound = math.sqrt(6.0 / _fan_in(module))
            module.weight.uniform_(-bound, bound, generator=gen)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.BatchNorm2d):
            module.weight.fill_(1.0)
            module.bias.zero_()
            module.reset_running_stats()
