"""Synthetic triple-image fixtures; no dependency on the pipeline package,
only on its file formats (JSON-lines manifest + PNG triples)."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def make_triple(rng, size):
    """Structured (micro, stress, crack) images with a learnable mapping."""
    gy, gx = np.mgrid[0:size, 0:size]
    micro = np.full((size, size), 255, dtype=np.uint8)
    field = np.zeros((size, size))
    for _ in range(6):
        cx = rng.uniform(0.12 * size, 0.88 * size)
        cy = rng.uniform(0.12 * size, 0.88 * size)
        r = rng.uniform(0.06 * size, 0.14 * size)
        mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r * r
        micro[mask] = 0
        field += np.exp(-(((gx - cx) ** 2 + (gy - cy) ** 2) / (3.0 * r * r)))
    stress = np.stack(
        [
            np.clip(field * 200.0, 0, 255),
            np.clip(field * 90.0, 0, 255),
            np.clip(255.0 - field * 255.0, 0, 255),
        ],
        axis=2,
    ).astype(np.uint8)
    crack_col = int(np.argmax(field.sum(axis=0)))
    crack = np.zeros((size, size, 3), dtype=np.uint8)
    crack[:, crack_col:] = 255
    crack[micro == 0] = (0, 0, 255)
    micro3 = np.repeat(micro[:, :, None], 3, axis=2)
    return micro3, stress, crack


def write_dataset(root: Path, n_train: int, n_val: int, size: int, seed: int = 0):
    """Triple PNGs plus a manifest in the pipeline's line-delimited schema."""
    rng = np.random.default_rng(seed)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_train + n_val):
        sid = f"s{i:04d}"
        triple = make_triple(rng, size)
        paths = []
        for k, img in enumerate(triple, start=1):
            rel = f"images/{sid}_{k}.png"
            Image.fromarray(img, mode="RGB").save(root / rel, format="PNG")
            paths.append(rel)
        records.append(
            dict(
                flipped=False,
                id=sid,
                path1=paths[0],
                path2=paths[1],
                path3=paths[2],
                split="train" if i < n_train else "val",
            )
        )
    manifest = root / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("triples64")
    manifest = write_dataset(root, n_train=8, n_val=2, size=64)
    return {"root": root, "manifest": manifest}
