"""Modified U-Net generator: 4x4 stride-2 conv ladder down to a 1x1x512 code,
mirrored transposed-conv decoder, skip concatenations on the three innermost
encoder/decoder pairs only, dropout 0.5 on the first three decoder blocks,
tanh output head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

N_SKIPS = 3
DROPOUT_BLOCKS = 3


def default_ladder(resolution: int):
    """Encoder channel counts: 64-128-256 then 512s until the code is 1x1."""
    n_blocks = int(math.log2(resolution))
    if 2**n_blocks != resolution or n_blocks < 4:
        raise ValueError(f"resolution must be a power of two >= 16, got {resolution}")
    base = [64, 128, 256]
    return tuple(base + [512] * (n_blocks - len(base)))


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture switches; defaults reproduce the 256x256 generator."""

    resolution: int = 256
    in_channels: int = 3
    out_channels: int = 3
    ladder: tuple = ()
    code_channels: int = 512
    n_skips: int = N_SKIPS
    dropout: float = 0.5
    dropout_blocks: int = DROPOUT_BLOCKS

    def __post_init__(self):
        if not self.ladder:
            object.__setattr__(self, "ladder", default_ladder(self.resolution))
        if 2 ** len(self.ladder) != self.resolution:
            raise ValueError(
                f"{len(self.ladder)} stride-2 blocks cannot take "
                f"{self.resolution} down to 1"
            )
        if self.ladder[-1] != self.code_channels:
            raise ValueError("ladder must end at the code width")
        if not 0 <= self.n_skips <= len(self.ladder) - 1:
            raise ValueError("n_skips out of range")


class _EncoderBlock(nn.Module):
    def __init__(self, c_in, c_out, first):
        super().__init__()
        layers = [nn.Conv2d(c_in, c_out, 4, stride=2, padding=1, bias=first)]
        if not first:
            layers.append(nn.BatchNorm2d(c_out))
        layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class _DecoderBlock(nn.Module):
    def __init__(self, c_in, c_out, dropout):
        super().__init__()
        layers = [
            nn.ConvTranspose2d(c_in, c_out, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
        ]
        if dropout > 0:
            layers.append(nn.Dropout(dropout))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class Generator(nn.Module):
    """Image-to-image generator; input and output are (N, 3, R, R) in [-1, 1]."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        ladder = cfg.ladder
        n = len(ladder)

        self.encoder = nn.ModuleList()
        c_prev = cfg.in_channels
        for i, c in enumerate(ladder):
            self.encoder.append(_EncoderBlock(c_prev, c, first=(i == 0)))
            c_prev = c

        # decoder block k mirrors encoder block n-1-k; the first n_skips
        # decoder outputs concatenate the matching encoder activations
        self.decoder = nn.ModuleList()
        c_in = cfg.code_channels
        for k in range(n - 1):
            c_out = ladder[n - 2 - k]
            dropout = cfg.dropout if k < cfg.dropout_blocks else 0.0
            self.decoder.append(_DecoderBlock(c_in, c_out, dropout))
            skip_ch = ladder[n - 2 - k] if k < cfg.n_skips else 0
            c_in = c_out + skip_ch
        self.head = nn.ConvTranspose2d(c_in, cfg.out_channels, 4, stride=2, padding=1)

    def forward(self, x):
        if x.shape[-1] != self.cfg.resolution or x.shape[-2] != self.cfg.resolution:
            raise ValueError(
                f"expected {self.cfg.resolution}x{self.cfg.resolution} input, "
                f"got {tuple(x.shape[-2:])}"
            )
        acts = []
        for block in self.encoder:
            x = block(x)
            acts.append(x)
        code = acts[-1]
        assert code.shape[-3:] == (self.cfg.code_channels, 1, 1), (
            f"code shape {tuple(code.shape[-3:])}"
        )
        y = code
        n = len(self.encoder)
        for k, block in enumerate(self.decoder):
            y = block(y)
            if k < self.cfg.n_skips:
                y = torch.cat([y, acts[n - 2 - k]], dim=1)
        return torch.tanh(self.head(y))

    def code(self, x):
        """Bottleneck activation (N, code_channels, 1, 1)."""
        for block in self.encoder:
            x = block(x)
        return x


def build_generator(cfg: GeneratorConfig = GeneratorConfig()) -> Generator:
    return Generator(cfg)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
