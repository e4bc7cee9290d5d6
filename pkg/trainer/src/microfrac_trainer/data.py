"""Dataset plumbing: reads the pipeline's JSON-lines manifest and PNG triples,
normalizes pixels to [-1, 1] for the tanh-headed generators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

PAIR_KINDS = {
    "micro_to_stress": ("path1", "path2"),
    "stress_to_crack": ("path2", "path3"),
    "micro_to_crack": ("path1", "path3"),
}


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path1: str
    path2: str
    path3: str
    flipped: bool
    split: str


def read_manifest(path):
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(ManifestEntry(**json.loads(line)))
    return entries


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) uint8 -> (3, H, W) float in [-1, 1]."""
    arr = np.asarray(image, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1))


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """(3, H, W) in [-1, 1] -> (H, W, 3) uint8 (round then clip)."""
    arr = (tensor.detach().cpu().numpy().transpose(1, 2, 0) + 1.0) * 127.5
    return np.clip(np.round(arr), 0.0, 255.0).astype(np.uint8)


class PairDataset(torch.utils.data.Dataset):
    """Paired images from a dataset manifest, filtered by split."""

    def __init__(self, manifest_path, pair: str, split: str, root=None):
        if pair not in PAIR_KINDS:
            raise ValueError(f"pair must be one of {sorted(PAIR_KINDS)}")
        manifest_path = Path(manifest_path)
        self.root = Path(root) if root is not None else manifest_path.parent
        entries = [e for e in read_manifest(manifest_path) if e.split == split]
        if not entries:
            raise ValueError(f"no {split!r} entries in {manifest_path}")
        src_key, dst_key = PAIR_KINDS[pair]
        self.items = [
            (e.id, self.root / getattr(e, src_key), self.root / getattr(e, dst_key))
            for e in entries
        ]

    def __len__(self):
        return len(self.items)

    def __getitem__(self, idx):
        _, src, dst = self.items[idx]
        return to_tensor(load_image(src)), to_tensor(load_image(dst))

    def sample_ids(self):
        return [sid for sid, _, _ in self.items]


class TensorPairDataset(torch.utils.data.Dataset):
    """In-memory pairs; used for Generator 2's (gen1 output -> crack) stage."""

    def __init__(self, sources: torch.Tensor, targets: torch.Tensor):
        if len(sources) != len(targets):
            raise ValueError("sources and targets must align")
        self.sources = sources
        self.targets = targets

    def __len__(self):
        return len(self.sources)

    def __getitem__(self, idx):
        return self.sources[idx], self.targets[idx]
