"""Triple-image rendering and dataset pre-processing.

Images are (H, W, 3) uint8 arrays. Row order follows the field grids
(row 0 = bottom of the physical domain); all three images of a sample share
this convention, so PNGs display the domain vertically mirrored, which is
immaterial for training and inspection.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from PIL import Image

# Fixed stress normalization window: 1.5 x the matrix tensile strength, so
# grayscale <-> stress correspondence is identical across samples.
DEFAULT_STRESS_RANGE = (0.0, 93.0)

WHITE = np.array([255, 255, 255], dtype=np.uint8)
BLACK = np.array([0, 0, 0], dtype=np.uint8)
BLUE = np.array([0, 0, 255], dtype=np.uint8)

# Jet-like stops chosen so the top-of-range (highest stress) colors average
# a grayscale near 60, anchoring the attention weight functions.
_COLOR_STOPS = [
    (0.000, (0, 0, 128)),
    (0.125, (0, 0, 255)),
    (0.375, (0, 255, 255)),
    (0.625, (255, 255, 0)),
    (0.875, (255, 0, 0)),
    (1.000, (128, 0, 0)),
]


def build_colormap() -> np.ndarray:
    """256-entry RGB lookup table (uint8); integer-exact on every platform."""
    xs = np.array([s[0] for s in _COLOR_STOPS])
    cols = np.array([s[1] for s in _COLOR_STOPS], dtype=float)
    t = np.arange(256) / 255.0
    table = np.stack([np.interp(t, xs, cols[:, c]) for c in range(3)], axis=1)
    return np.round(table).astype(np.uint8)


COLORMAP = build_colormap()


def render_microstructure(phase: np.ndarray) -> np.ndarray:
    """Matrix cells white, fiber cells black."""
    phase = np.asarray(phase, dtype=bool)
    img = np.empty(phase.shape + (3,), dtype=np.uint8)
    img[~phase] = WHITE
    img[phase] = BLACK
    return img


def render_von_mises(field: np.ndarray, colormap: np.ndarray = COLORMAP,
                     v_range=DEFAULT_STRESS_RANGE) -> np.ndarray:
    """Normalize the field onto [0, 1] and map through the lookup table.

    NaN cells (masked fibers) take the colormap's zero color; a degenerate
    range produces a uniform zero-color image.
    """
    field = np.asarray(field, dtype=float)
    lo, hi = v_range
    masked = ~np.isfinite(field)
    if not hi > lo:  # degenerate window: uniform zero-color image
        return np.broadcast_to(colormap[0], field.shape + (3,)).copy()
    norm = np.clip((np.where(masked, lo, field) - lo) / (hi - lo), 0.0, 1.0)
    idx = np.round(norm * 255.0).astype(np.int64)
    idx[masked] = 0
    return colormap[idx]


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Per-pixel mean of the red, green and blue channels."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    return image.astype(np.float64).mean(axis=2)


def render_crack(ux: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Two-tone crack image: cells right of the median displacement white,
    left black, fiber cells overpainted blue."""
    ux = np.asarray(ux, dtype=float)
    phase = np.asarray(phase, dtype=bool)
    if ux.shape != phase.shape:
        raise ValueError("ux and phase grids must share shape")
    med = float(np.median(ux))
    img = np.empty(ux.shape + (3,), dtype=np.uint8)
    img[...] = BLACK
    img[ux > med] = WHITE
    img[phase] = BLUE
    return img


def _box_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic (n_dst, n_src) area-overlap weights for box resampling."""
    w = np.zeros((n_dst, n_src))
    scale = n_src / n_dst
    for i in range(n_dst):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_src)
        for j in range(j0, j1):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def resize(image: np.ndarray, size: int = 256) -> np.ndarray:
    """Area-average downsampling / nearest-neighbor upsampling to size x size."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    out = image.astype(np.float64)
    if h > size:
        out = np.einsum("ij,jwc->iwc", _box_weights(h, size), out)
    elif h < size:
        rows = np.minimum((np.arange(size) + 0.5) * h // size, h - 1).astype(int)
        out = out[rows]
    if w > size:
        out = np.einsum("ij,hjc->hic", _box_weights(w, size), out)
    elif w < size:
        cols = np.minimum((np.arange(size) + 0.5) * w // size, w - 1).astype(int)
        out = out[:, cols]
    return np.round(out).astype(np.uint8)


def flip_vertical(image: np.ndarray) -> np.ndarray:
    """Mirror the image top-to-bottom (an involution, pixel-exact)."""
    return np.flipud(np.asarray(image)).copy()


def split_ids(ids, n_val: int, seed: int):
    """Seeded disjoint split into (train, val); both returned sorted."""
    ids = sorted(ids)
    if n_val >= len(ids):
        raise ValueError(f"n_val={n_val} must be below the dataset size {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    val = sorted(ids[i] for i in order[:n_val])
    train = sorted(ids[i] for i in order[n_val:])
    return train, val


@dataclass(frozen=True)
class TripleSample:
    """One dataset record: the three paired image files plus metadata."""

    id: str
    path1: str  # microstructure
    path2: str  # von Mises at ESoDI
    path3: str  # crack pattern
    flipped: bool
    split: str  # train | val

    def __post_init__(self):
        if self.split not in ("train", "val"):
            raise ValueError(f"bad split {self.split!r}")


def write_manifest(samples, path) -> None:
    """Line-delimited JSON records with sorted keys (byte-stable)."""
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate sample ids in manifest: {dupes}")
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(asdict(s), sort_keys=True) + "\n")


def read_manifest(path):
    samples = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            samples.append(TripleSample(**rec))
    return samples


def save_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def save_jpeg(image: np.ndarray, path, quality: int = 95) -> None:
    """Lossy export for parity experiments with JPEG-based datasets."""
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(
        path, format="JPEG", quality=quality
    )


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))
