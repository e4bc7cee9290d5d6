"""Secondary acceptance criteria, one PASS/FAIL line each.

The loss-parity criterion exercises the pipeline package strictly through
its public CLI (the external interface), never by importing it.
"""

import csv
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from conftest import write_dataset
from microfrac_trainer.data import PairDataset, load_image, to_tensor
from microfrac_trainer.losses import MAE, AttentionParams, attention_loss_8bit
from microfrac_trainer.train import (
    TrainConfig,
    select_gen1,
    select_optimal_epoch,
    train_gen1,
    train_gen2,
    predict,
)
from microfrac_trainer.unet import GeneratorConfig, build_generator


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


def test_generator_shape_contracts():
    with criterion("generator shapes: 256x256x3 in/out, 1x1x512 code"):
        g = build_generator(GeneratorConfig(resolution=256)).eval()
        x = torch.randn(1, 3, 256, 256)
        with torch.no_grad():
            out = g(x)
            code = g.code(x)
        assert tuple(out.shape) == (1, 3, 256, 256)
        assert tuple(code.shape) == (1, 512, 1, 1)


def test_overfit_oracle_and_sequential_training(tmp_path):
    with criterion("overfit: 8-sample gen1 < 0.02 within 200 epochs; "
                   "sequential gen2 end-to-end at 64x64 < 30 min"):
        t0 = time.time()
        root = tmp_path / "data"
        manifest = write_dataset(root, n_train=8, n_val=2, size=64)
        micro_stress = PairDataset(manifest, "micro_to_stress", "train", root=root)
        micro_stress_val = PairDataset(manifest, "micro_to_stress", "val", root=root)
        gen_cfg = GeneratorConfig(resolution=64)

        cfg1 = TrainConfig(epochs=120, lr=1e-3, batch_size=4, loss=MAE,
                           checkpoint_every=20,
                           checkpoint_dir=str(tmp_path / "g1"), seed=1)
        g1 = train_gen1(micro_stress, micro_stress_val, cfg1, gen_cfg)
        assert len(g1.train_curve) == cfg1.epochs
        assert min(g1.train_curve) < 0.02, (
            f"best training loss {min(g1.train_curve):.4f}"
        )

        best = select_gen1(g1)
        gen1 = build_generator(gen_cfg)
        gen1.load_state_dict(best)
        gen1.eval()

        micro_crack = PairDataset(manifest, "micro_to_crack", "train", root=root)
        cfg2 = TrainConfig(epochs=20, lr=1e-3, batch_size=4, loss=MAE,
                           checkpoint_every=20,
                           checkpoint_dir=str(tmp_path / "g2"), seed=2)
        g2 = train_gen2(micro_crack, gen1, cfg2, gen_cfg)
        assert len(g2.train_curve) == cfg2.epochs
        assert g2.train_curve[-1] < g2.train_curve[0]

        micro = load_image(root / "images" / "s0000_1.png")
        stress_img, crack_img = predict(micro, gen1, g2.model())
        assert stress_img.shape == crack_img.shape == (64, 64, 3)

        elapsed = time.time() - t0
        assert elapsed < 1800.0, f"sequential training took {elapsed:.0f}s"


def test_loss_parity_with_pipeline_cli(tmp_path):
    with criterion("loss parity: torch attention losses match the pipeline "
                   "CLI on 50 fixture pairs to 1e-5"):
        rng = np.random.default_rng(42)
        pred_dir = tmp_path / "pred"
        targ_dir = tmp_path / "targ"
        pred_dir.mkdir()
        targ_dir.mkdir()
        names = []
        for i in range(50):
            name = f"pair{i:03d}.png"
            target = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
            pred = np.clip(
                target.astype(int) + rng.integers(-40, 41, target.shape), 0, 255
            ).astype(np.uint8)
            Image.fromarray(target, "RGB").save(targ_dir / name)
            Image.fromarray(pred, "RGB").save(pred_dir / name)
            names.append(name)

        report = tmp_path / "report.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "microfrac.cli", "metrics",
             "--pred", str(pred_dir), "--target", str(targ_dir),
             "--out-csv", str(report)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr

        cli_rows = {}
        with open(report, newline="") as fh:
            for row in csv.DictReader(fh):
                cli_rows[row["sample"]] = (
                    float(row["att_train"]), float(row["att_val"])
                )

        p = AttentionParams()
        for name in names:
            pred8 = torch.from_numpy(
                np.asarray(Image.open(pred_dir / name)).astype(np.float64)
            ).permute(2, 0, 1)
            targ8 = torch.from_numpy(
                np.asarray(Image.open(targ_dir / name)).astype(np.float64)
            ).permute(2, 0, 1)
            att_tr = float(attention_loss_8bit(pred8, targ8, p, "training"))
            att_val = float(attention_loss_8bit(pred8, targ8, p, "validation"))
            cli_tr, cli_val = cli_rows[name]
            assert abs(att_tr - cli_tr) < 1e-5, name
            assert abs(att_val - cli_val) < 1e-5, name


def test_epoch_selection_dip_at_25():
    with criterion("epoch selection: engineered dip at epoch 25 returned"):
        epochs = np.arange(120)
        curve = np.where(epochs < 21, 0.02 * epochs, 0.42 + 0.001 * (epochs - 21))
        curve = curve.astype(float)
        curve[25] -= 0.05
        assert select_optimal_epoch(curve, (22, 52)) == 25
