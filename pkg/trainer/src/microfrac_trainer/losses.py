"""Torch implementations of the pixel losses.

Semantics mirror the pipeline's metrics: the attention weight is a Gaussian
of the TARGET image's grayscale computed on the 8-bit scale (mean of RGB),
with gamma scaled by 255 (gamma_eff = 25.5 for the default 0.1). Losses used
during training are measured in normalized pixel units ([0, 1] scale, i.e.
half the [-1, 1] tanh-space distance).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

MAE = "mae"
ATTENTION = "attention"


@dataclass(frozen=True)
class AttentionParams:
    alpha: float = 50.0
    beta: float = 60.0
    gamma: float = 0.1
    gamma_raw: bool = False

    @property
    def gamma_eff(self) -> float:
        return self.gamma if self.gamma_raw else self.gamma * 255.0


def _gauss_8bit(gray, p: AttentionParams):
    return torch.exp(-((gray - p.beta) ** 2) / (2.0 * p.gamma_eff**2))


def attention_weights_8bit(target_8bit: torch.Tensor, p: AttentionParams,
                           kind: str = "training") -> torch.Tensor:
    """Per-pixel weights from an (..., 3, H, W) target on the 8-bit scale."""
    gray = target_8bit.mean(dim=-3)
    gauss = _gauss_8bit(gray, p)
    if kind == "training":
        return p.alpha * gauss + 1.0
    if kind == "validation":
        return gauss
    raise ValueError(f"kind must be training or validation, got {kind!r}")


def attention_loss_8bit(pred_8bit: torch.Tensor, target_8bit: torch.Tensor,
                        p: AttentionParams, kind: str = "training") -> torch.Tensor:
    """Attention loss on the 8-bit pixel scale (matches the pipeline metrics)."""
    if pred_8bit.shape != target_8bit.shape:
        raise ValueError(f"shape mismatch: {pred_8bit.shape} vs {target_8bit.shape}")
    w = attention_weights_8bit(target_8bit, p, kind).unsqueeze(-3)
    return (w * (pred_8bit - target_8bit).abs()).mean()


def mae_8bit(pred_8bit: torch.Tensor, target_8bit: torch.Tensor) -> torch.Tensor:
    if pred_8bit.shape != target_8bit.shape:
        raise ValueError(f"shape mismatch: {pred_8bit.shape} vs {target_8bit.shape}")
    return (pred_8bit - target_8bit).abs().mean()


def denormalize_8bit(x: torch.Tensor) -> torch.Tensor:
    """[-1, 1] tensor onto the continuous 8-bit scale (no quantization)."""
    return (x + 1.0) * 127.5


def training_loss(pred: torch.Tensor, target: torch.Tensor, kind: str,
                  p: AttentionParams = AttentionParams()) -> torch.Tensor:
    """Loss on [-1, 1] tensors, reported in [0, 1] pixel units.

    Attention weights come from the target's 8-bit grayscale, so the weight
    field is identical to the pipeline's regardless of normalization.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    err = (pred - target).abs() / 2.0
    if kind == MAE:
        return err.mean()
    if kind == ATTENTION:
        w = attention_weights_8bit(denormalize_8bit(target), p, "training")
        return (w.unsqueeze(-3) * err).mean()
    raise ValueError(f"unknown loss kind {kind!r}")
