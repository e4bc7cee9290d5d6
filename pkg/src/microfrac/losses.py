"""Attention-weighted losses, accuracy formula, and epoch selection.

The attention losses weight per-pixel absolute error by a Gaussian of the
TARGET image's grayscale, centered where the colormap puts the highest
stresses. gamma is interpreted on the normalized [0, 1] grayscale axis and
scaled by 255 internally (gamma_eff = 25.5 for the default 0.1), which puts
meaningful weight over the stated 20-100 grayscale band; set gamma_raw=True
to use the literal value.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .imaging import to_grayscale

TRAINING = "training"
VALIDATION = "validation"


@dataclass(frozen=True)
class WeightFunction:
    """Gaussian pixel-weight parameters shared by training and validation."""

    kind: str
    alpha: float = 50.0
    beta: float = 60.0
    gamma: float = 0.1
    gamma_raw: bool = False

    def __post_init__(self):
        if self.kind not in (TRAINING, VALIDATION):
            raise ValueError(f"kind must be training or validation, got {self.kind!r}")
        if self.alpha < 0 or not (0.0 <= self.beta <= 255.0) or self.gamma <= 0:
            raise ValueError("need alpha >= 0, 0 <= beta <= 255, gamma > 0")

    @property
    def gamma_eff(self) -> float:
        return self.gamma if self.gamma_raw else self.gamma * 255.0


def _gauss(g, w: WeightFunction):
    g = np.asarray(g, dtype=np.float64)
    return np.exp(-((g - w.beta) ** 2) / (2.0 * w.gamma_eff**2))


def weight_tr(g, w: WeightFunction):
    """Training weight alpha * gauss + 1, in [1, alpha + 1]."""
    if w.kind != TRAINING:
        raise ValueError("weight_tr needs a training-kind WeightFunction")
    return w.alpha * _gauss(g, w) + 1.0


def weight_val(g, w: WeightFunction):
    """Validation weight gauss, in (0, 1]."""
    if w.kind != VALIDATION:
        raise ValueError("weight_val needs a validation-kind WeightFunction")
    return _gauss(g, w)


def _check_shapes(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def mae(pred, target) -> float:
    """Mean absolute error over all pixels and channels (8-bit value scale)."""
    pred, target = _check_shapes(pred, target)
    return float(np.abs(pred - target).mean())


def attention_loss(pred, target, w: WeightFunction) -> float:
    """Mean of W(target grayscale) * |pred - target| over pixels and channels."""
    pred, target = _check_shapes(pred, target)
    gray = to_grayscale(target)
    wmap = weight_tr(gray, w) if w.kind == TRAINING else weight_val(gray, w)
    return float((wmap[..., None] * np.abs(pred - target)).mean())


@dataclass(frozen=True)
class InspectionTally:
    """Counts of good / partly-good / bad expert labels."""

    n_g: int
    n_pg: int
    n_b: int

    def __post_init__(self):
        if min(self.n_g, self.n_pg, self.n_b) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_g + self.n_pg + self.n_b


def accuracy(tally: InspectionTally) -> float:
    """(n_G + 0.5 * n_PG) / total * 100, with half credit for partly good."""
    if tally.total == 0:
        raise ValueError("empty tally")
    return (tally.n_g + 0.5 * tally.n_pg) / tally.total * 100.0


def select_optimal_epoch(curve, window=None, smooth_window: int = 1) -> int:
    """Epoch of the minimum of the (optionally smoothed) loss curve.

    window is an inclusive (start, end) epoch range; ties break toward the
    earlier epoch. smooth_window > 1 applies a centered moving average with
    partial windows at the edges.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 1 or len(curve) == 0:
        raise ValueError("curve must be a non-empty 1-D sequence")
    if window is None:
        window = (0, len(curve) - 1)
    lo, hi = int(window[0]), int(window[1])
    if not (0 <= lo <= hi < len(curve)):
        raise ValueError(f"window {window} invalid for curve of length {len(curve)}")
    if smooth_window > 1:
        half = smooth_window // 2
        smoothed = np.array([
            curve[max(0, i - half): i + half + 1].mean() for i in range(len(curve))
        ])
    else:
        smoothed = curve
    segment = smoothed[lo: hi + 1]
    return lo + int(np.argmin(segment))


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

_LABELS = {"G": "n_g", "PG": "n_pg", "B": "n_b"}


def read_labels_csv(path) -> InspectionTally:
    """CSV of `sample_id,label` rows with label in {G, PG, B}."""
    counts = {"n_g": 0, "n_pg": 0, "n_b": 0}
    rows = 0
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (line_no == 1 and row[0].strip().lower() == "sample_id"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'sample_id,label'")
            label = row[1].strip().upper()
            if label not in _LABELS:
                raise ValueError(f"{path}:{line_no}: unknown label {row[1]!r}")
            counts[_LABELS[label]] += 1
            rows += 1
    if rows == 0:
        raise ValueError(f"{path}: no label rows")
    return InspectionTally(**counts)


def write_loss_curve(path, losses) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(losses):
            writer.writerow([epoch, f"{loss:.17g}"])


def read_loss_curve(path) -> np.ndarray:
    losses = {}
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (line_no == 1 and row[0].strip().lower() == "epoch"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'epoch,loss'")
            losses[int(row[0])] = float(row[1])
    if not losses:
        raise ValueError(f"{path}: no loss rows")
    return np.array([losses[e] for e in sorted(losses)])
