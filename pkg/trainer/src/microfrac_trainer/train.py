"""Sequential training of the two stacked generators plus the
single-generator baseline.

Generator 1 learns microstructure -> stress-at-failure-onset images with
either plain MAE or the attention loss; its optimal epoch is the minimum of
the validation attention-loss curve (computed on the 8-bit scale, quantized
predictions, so the curve matches the pipeline's metrics report exactly).
Generator 2 then learns to map frozen-Generator-1 outputs to crack images
with plain MAE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import TensorPairDataset, to_image, to_tensor
from .losses import ATTENTION, MAE, AttentionParams, attention_loss_8bit, training_loss
from .unet import Generator, GeneratorConfig, build_generator


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    optimizer: str = "adam"
    lr: float = 2e-4
    betas: tuple = (0.5, 0.999)
    batch_size: int = 16
    loss: str = ATTENTION
    checkpoint_every: int = 1
    checkpoint_dir: str = ""
    seed: int = 0
    attention: AttentionParams = AttentionParams()

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in (MAE, ATTENTION):
            raise ValueError(f"loss must be {MAE} or {ATTENTION}")
        if self.optimizer != "adam":
            raise ValueError("only the adaptive-moment optimizer is wired up")


@dataclass
class TrainedModel:
    """Weights plus per-epoch loss curves (lengths equal the epoch count)."""

    config: GeneratorConfig
    train_config: TrainConfig
    state_dict: dict
    train_curve: list
    val_att_curve: list
    checkpoint_epochs: list

    def checkpoint_path(self, epoch: int) -> Path:
        return Path(self.train_config.checkpoint_dir) / f"epoch_{epoch:04d}.pt"

    def load_checkpoint(self, epoch: int) -> dict:
        if epoch not in self.checkpoint_epochs:
            raise ValueError(f"no checkpoint for epoch {epoch}")
        return torch.load(self.checkpoint_path(epoch), weights_only=True)

    def model(self, epoch: int | None = None) -> Generator:
        gen = build_generator(self.config)
        gen.load_state_dict(self.state_dict if epoch is None
                            else self.load_checkpoint(epoch))
        gen.eval()
        return gen


def write_loss_curve(path, losses) -> None:
    """epoch,loss CSV in the schema the pipeline's metrics tools consume."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(losses):
            writer.writerow([epoch, f"{loss:.17g}"])


def select_optimal_epoch(curve, window=None) -> int:
    """Epoch of the curve minimum within an inclusive window; early tie-break."""
    curve = np.asarray(curve, dtype=float)
    if curve.ndim != 1 or len(curve) == 0:
        raise ValueError("curve must be a non-empty 1-D sequence")
    lo, hi = (0, len(curve) - 1) if window is None else (int(window[0]), int(window[1]))
    if not (0 <= lo <= hi < len(curve)):
        raise ValueError(f"window {window} invalid for length {len(curve)}")
    return lo + int(np.argmin(curve[lo: hi + 1]))


def _quantized_8bit(pred: torch.Tensor) -> torch.Tensor:
    """Round [-1, 1] predictions onto exact 8-bit values (as saved PNGs would)."""
    return torch.clamp(torch.round((pred + 1.0) * 127.5), 0.0, 255.0)


@torch.no_grad()
def validation_attention_loss(model: Generator, dataset, p: AttentionParams,
                              batch_size: int = 8) -> float:
    """Mean 8-bit-scale validation attention loss over a paired dataset."""
    model.eval()
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    total, count = 0.0, 0
    for src, dst in loader:
        pred = _quantized_8bit(model(src)).to(torch.float64)
        target = _quantized_8bit(dst).to(torch.float64)
        total += float(attention_loss_8bit(pred, target, p, "validation")) * len(src)
        count += len(src)
    return total / count


def train_generator(train_set, val_set, cfg: TrainConfig,
                    gen_cfg: GeneratorConfig) -> TrainedModel:
    """Generic supervised loop shared by both generators and the baseline."""
    if len(train_set) == 0:
        raise ValueError("empty training dataset")
    torch.manual_seed(cfg.seed)
    model = build_generator(gen_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)
    loader = DataLoader(train_set, batch_size=cfg.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(cfg.seed))

    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    train_curve, val_curve, ckpt_epochs = [], [], []
    for epoch in range(cfg.epochs):
        model.train()
        total, count = 0.0, 0
        for src, dst in loader:
            opt.zero_grad()
            loss = training_loss(model(src), dst, cfg.loss, cfg.attention)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(src)
            count += len(src)
        train_curve.append(total / count)
        if val_set is not None and len(val_set) > 0:
            val_curve.append(validation_attention_loss(model, val_set, cfg.attention))
        else:
            val_curve.append(float("nan"))
        if ckpt_dir and (epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1):
            torch.save(model.state_dict(),
                       ckpt_dir / f"epoch_{epoch:04d}.pt")
            ckpt_epochs.append(epoch)
    return TrainedModel(
        config=gen_cfg, train_config=cfg,
        state_dict={k: v.detach().clone() for k, v in model.state_dict().items()},
        train_curve=train_curve, val_att_curve=val_curve,
        checkpoint_epochs=ckpt_epochs,
    )


def train_gen1(train_set, val_set, cfg: TrainConfig,
               gen_cfg: GeneratorConfig = GeneratorConfig()) -> TrainedModel:
    """Microstructure -> stress generator (MAE or attention objective)."""
    return train_generator(train_set, val_set, cfg, gen_cfg)


def select_gen1(trained: TrainedModel, window=None) -> dict:
    """Checkpointed weights at the validation-attention-loss optimum."""
    epoch = select_optimal_epoch(trained.val_att_curve, window)
    if epoch in trained.checkpoint_epochs:
        return trained.load_checkpoint(epoch)
    available = [e for e in trained.checkpoint_epochs if e <= epoch]
    if not available:
        return trained.state_dict
    return trained.load_checkpoint(max(available))


@torch.no_grad()
def gen1_outputs(gen1: Generator, dataset, batch_size: int = 8) -> torch.Tensor:
    """Frozen Generator 1 predictions, the training inputs for Generator 2."""
    gen1.eval()
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    return torch.cat([gen1(src) for src, _ in loader])


def train_gen2(stress_to_crack_set, gen1: Generator, cfg: TrainConfig,
               gen_cfg: GeneratorConfig = GeneratorConfig()) -> TrainedModel:
    """Crack generator trained on frozen Generator 1 outputs, MAE objective.

    stress_to_crack_set pairs (micro-derived stress inputs, crack targets);
    the sources fed to Generator 2 are gen1(micro), not the ground-truth
    stress images.
    """
    micro_set = stress_to_crack_set
    sources = gen1_outputs(gen1, micro_set)
    targets = torch.stack([micro_set[i][1] for i in range(len(micro_set))])
    cfg2 = replace(cfg, loss=MAE)
    return train_generator(TensorPairDataset(sources, targets), None, cfg2, gen_cfg)


def train_single_baseline(micro_to_crack_set, cfg: TrainConfig,
                          gen_cfg: GeneratorConfig = GeneratorConfig()) -> TrainedModel:
    """Direct microstructure -> crack translation with MAE (the ablation)."""
    cfg1 = replace(cfg, loss=MAE)
    return train_generator(micro_to_crack_set, None, cfg1, gen_cfg)


@torch.no_grad()
def predict(micro_image: np.ndarray, gen1: Generator, gen2: Generator):
    """(stress image, crack image) uint8 predictions for one microstructure."""
    gen1.eval()
    gen2.eval()
    x = to_tensor(micro_image).unsqueeze(0)
    stress = gen1(x)
    crack = gen2(stress)
    return to_image(stress[0]), to_image(crack[0])


@torch.no_grad()
def flip_equivariance_mae(model: Generator, dataset, batch_size: int = 8) -> float:
    """Robustness metric: MAE between flip(pred(x)) and pred(flip(x)), in
    [0, 1] pixel units. Reported, not asserted."""
    model.eval()
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    total, count = 0.0, 0
    for src, _ in loader:
        a = model(src).flip(-2)
        b = model(src.flip(-2))
        total += float((a - b).abs().mean() / 2.0) * len(src)
        count += len(src)
    return total / count
