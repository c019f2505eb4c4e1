"""Generator and discriminator networks for optic-disc segmentation.

The generator is an 8+8 layer encoder-decoder with skip concatenation that
maps a 3x256x256 fundus image in [0, 1] to a 1x256x256 soft disc mask. The
discriminator scores (image, mask) pairs on a 30x30 grid of patches.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import torch
import torch.nn as nn

IMAGE_SIZE = 256


class ConfigError(ValueError):
    """Raised for architecture or run configurations that cannot be built."""


class ShapeError(ValueError):
    """Raised when a tensor does not have the shape a network expects."""


@dataclass
class GeneratorConfig:
    encoder_channels: list[int] = field(
        default_factory=lambda: [64, 128, 256, 512, 512, 512, 512, 512]
    )
    in_channels: int = 3
    kernel: int = 4
    stride: int = 2
    leaky_slope: float = 0.2
    noise_dropout_p: float = 0.5
    dropout_decoder_layers: int = 3

    def validate(self) -> None:
        n = len(self.encoder_channels)
        if (1 << n) != IMAGE_SIZE:
            raise ConfigError(
                f"encoder_channels has {n} entries; {IMAGE_SIZE}x{IMAGE_SIZE} "
                f"input needs exactly 8 stride-2 layers to reach a 1x1 bottleneck"
            )
        if any(c < 1 for c in self.encoder_channels):
            raise ConfigError("encoder_channels must be positive")
        if self.kernel != 4 or self.stride != 2:
            raise ConfigError("generator layers use 4x4 kernels with stride 2")
        if not 0.0 <= self.noise_dropout_p <= 1.0:
            raise ConfigError("noise_dropout_p must lie in [0, 1]")
        if not 0 <= self.dropout_decoder_layers <= n - 1:
            raise ConfigError(f"dropout_decoder_layers must lie in [0, {n - 1}]")
        if self.leaky_slope < 0:
            raise ConfigError("leaky_slope must be non-negative")


@dataclass
class DiscriminatorConfig:
    layer_channels: list[int] = field(default_factory=lambda: [64, 128, 256, 512, 1])
    in_channels: int = 4
    kernel: int = 4
    leaky_slope: float = 0.2

    # stride and padding per layer; 256 -> 128 -> 64 -> 32 -> 31 -> 30
    strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    paddings: tuple[int, ...] = (1, 1, 1, 1, 1)

    def validate(self) -> None:
        if len(self.layer_channels) != 5:
            raise ConfigError("discriminator has exactly five convolutional layers")
        if self.layer_channels[-1] != 1:
            raise ConfigError("last discriminator layer must emit one channel")
        if any(c < 1 for c in self.layer_channels):
            raise ConfigError("layer_channels must be positive")
        if self.kernel != 4:
            raise ConfigError("discriminator layers use 4x4 kernels")

    def output_size(self, size: int) -> int:
        for s, p in zip(self.strides, self.paddings):
            size = (size + 2 * p - self.kernel) // s + 1
        return size


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


class _Down(nn.Sequential):
    def __init__(self, cin, cout, norm, activation):
        layers = [nn.Conv2d(cin, cout, 4, stride=2, padding=1)]
        if norm:
            layers.append(nn.BatchNorm2d(cout))
        layers.append(activation)
        super().__init__(*layers)


class _Up(nn.Sequential):
    def __init__(self, cin, cout, slope, dropout):
        layers = [
            nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1),
            nn.BatchNorm2d(cout),
            nn.LeakyReLU(slope),
        ]
        if dropout > 0:
            layers.append(nn.Dropout(dropout))
        super().__init__(*layers)


class Generator(nn.Module):
    """Encoder-decoder with skip connections.

    Decoder layer ``i`` (1-based) concatenates its output with the output of
    encoder layer ``8 - i``; the last decoder layer emits one channel through
    a sigmoid. Dropout in the first ``dropout_decoder_layers`` decoder layers
    plays the role of the noise input and is active only in train mode.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        ch = list(cfg.encoder_channels)
        n = len(ch)
        slope = cfg.leaky_slope

        self.encoders = nn.ModuleList()
        for i in range(n):
            cin = cfg.in_channels if i == 0 else ch[i - 1]
            if i == n - 1:
                block = _Down(cin, ch[i], norm=False, activation=nn.Tanh())
            else:
                block = _Down(cin, ch[i], norm=i > 0, activation=nn.LeakyReLU(slope))
            self.encoders.append(block)

        self.decoders = nn.ModuleList()
        cin = ch[-1]
        for i in range(n - 1):
            cout = ch[n - 2 - i]
            p = cfg.noise_dropout_p if i < cfg.dropout_decoder_layers else 0.0
            self.decoders.append(_Up(cin, cout, slope, p))
            cin = 2 * cout
        self.head = nn.ConvTranspose2d(cin, 1, 4, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        check_image_batch(x)
        skips = []
        h = x
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
        skips.pop()  # bottleneck has no skip partner
        for dec in self.decoders:
            h = torch.cat([dec(h), skips.pop()], dim=1)
        return torch.sigmoid(self.head(h))


class Discriminator(nn.Module):
    """Five-layer convolutional patch discriminator on image+mask pairs."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        layers = []
        cin = cfg.in_channels
        last = len(cfg.layer_channels) - 1
        for i, cout in enumerate(cfg.layer_channels):
            layers.append(
                nn.Conv2d(cin, cout, cfg.kernel, stride=cfg.strides[i], padding=cfg.paddings[i])
            )
            if 0 < i < last:
                layers.append(nn.BatchNorm2d(cout))
            if i < last:
                layers.append(nn.LeakyReLU(cfg.leaky_slope))
            cin = cout
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or m.dim() != 4:
            raise ShapeError("discriminator inputs must be 4-D (B, C, H, W)")
        if x.shape[0] != m.shape[0]:
            raise ShapeError(f"batch size mismatch: image {x.shape[0]} vs mask {m.shape[0]}")
        if x.shape[2:] != m.shape[2:]:
            raise ShapeError(f"spatial mismatch: image {tuple(x.shape[2:])} vs mask {tuple(m.shape[2:])}")
        xm = torch.cat([x, m], dim=1)
        if xm.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"image+mask carry {xm.shape[1]} channels, expected {self.cfg.in_channels}"
            )
        return torch.sigmoid(self.net(xm))


def check_image_batch(x: torch.Tensor, channels: int = 3) -> None:
    if x.dim() != 4 or x.shape[1] != channels or tuple(x.shape[2:]) != (IMAGE_SIZE, IMAGE_SIZE):
        raise ShapeError(
            f"expected image batch of shape Bx{channels}x{IMAGE_SIZE}x{IMAGE_SIZE}, got {tuple(x.shape)}"
        )


def parameter_set(module: nn.Module) -> "OrderedDict[str, torch.Tensor]":
    """Named parameters and buffers (batch-norm statistics included)."""
    return OrderedDict((k, v.detach().clone()) for k, v in module.state_dict().items())


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def build_generator(cfg: GeneratorConfig | None = None, seed: int = 0):
    cfg = cfg or GeneratorConfig()
    cfg.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        gen = Generator(cfg)
        gen.apply(_init_weights)
    return gen, parameter_set(gen)


def build_discriminator(cfg: DiscriminatorConfig | None = None, seed: int = 0):
    cfg = cfg or DiscriminatorConfig()
    cfg.validate()
    if cfg.output_size(IMAGE_SIZE) < 1:
        raise ConfigError("discriminator geometry collapses the 256x256 input")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        disc = Discriminator(cfg)
        disc.apply(_init_weights)
    return disc, parameter_set(disc)


def generator_forward(gen: Generator, x: torch.Tensor, mode: str = "eval") -> torch.Tensor:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    gen.train(mode == "train")
    if mode == "eval":
        with torch.no_grad():
            return gen(x)
    return gen(x)


def discriminator_forward(disc: Discriminator, x: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    return disc(x, m)
