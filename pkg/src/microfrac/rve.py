"""Random fiber arrangement generation with NND-distribution matching.

Fibers start on a staggered lattice, get shuffled by accepted random
perturbations, then a second perturbation phase only accepts moves that
reduce the KL divergence between the arrangement's nearest-neighbor
distance (NND) histogram and a target histogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Additive smoothing applied to empty target bins so log-ratios stay finite.
KL_EPS = 1e-9

CONTAINED = "contained"
PERIODIC = "periodic"


class InfeasibleSpecError(ValueError):
    """Raised when a staggered lattice cannot host the requested fibers."""


class GenerationError(RuntimeError):
    """Raised when phase 2 hits the iteration cap before reaching the KL threshold.

    Carries the best arrangement found so far and its final KL value.
    """

    def __init__(self, message, best_rve, final_kl, trace):
        super().__init__(message)
        self.best_rve = best_rve
        self.final_kl = final_kl
        self.trace = trace


@dataclass(frozen=True)
class Fiber:
    """One circular fiber: center (x, y) and radius, all in micrometers."""

    x: float
    y: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"fiber radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class RveSpec:
    """Domain geometry and fiber population of one RVE."""

    width: float
    height: float
    n_fibers: int
    fiber_radius: float
    min_gap: float = 0.0

    def __post_init__(self):
        if min(self.width, self.height, self.fiber_radius) <= 0:
            raise ValueError("width, height and fiber_radius must be positive")
        if self.n_fibers < 0:
            raise ValueError("n_fibers must be >= 0")
        if self.min_gap < 0:
            raise ValueError("min_gap must be >= 0")
        fiber_area = self.n_fibers * math.pi * self.fiber_radius**2
        if fiber_area > self.width * self.height:
            raise ValueError(
                f"total fiber area {fiber_area:.3g} exceeds domain area "
                f"{self.width * self.height:.3g}"
            )

    @property
    def min_center_distance(self):
        return 2.0 * self.fiber_radius + self.min_gap

    @property
    def fiber_area_fraction(self):
        return self.n_fibers * math.pi * self.fiber_radius**2 / (self.width * self.height)


@dataclass
class Rve:
    """A fiber arrangement; centers stored as an (n, 2) float array."""

    spec: RveSpec
    centers: np.ndarray

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        if self.spec.n_fibers == 0 and self.centers.size == 0:
            self.centers = np.zeros((0, 2))
        if len(self.centers) != self.spec.n_fibers:
            raise ValueError(
                f"expected {self.spec.n_fibers} fibers, got {len(self.centers)}"
            )

    @property
    def fibers(self):
        r = self.spec.fiber_radius
        return [Fiber(x, y, r) for x, y in self.centers]

    def copy(self):
        return Rve(self.spec, self.centers.copy())


@dataclass(frozen=True)
class NndHistogram:
    """Normalized histogram of nearest-neighbor distances."""

    bin_edges: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "probabilities", probs)
        if edges.ndim != 1 or len(edges) != len(probs) + 1:
            raise ValueError("need len(bin_edges) == len(probabilities) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly ascending")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()}, expected 1")


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the two-phase perturbation algorithm."""

    perturb_radius: float
    phase1_factor: int = 20
    kl_threshold: float = 0.05
    max_iterations: int = 200_000
    rng_seed: int = 0
    boundary_policy: str = CONTAINED

    def __post_init__(self):
        if self.perturb_radius <= 0:
            raise ValueError("perturb_radius must be positive")
        if self.phase1_factor < 1:
            raise ValueError("phase1_factor must be >= 1")
        if self.kl_threshold <= 0:
            raise ValueError("kl_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.boundary_policy not in (CONTAINED, PERIODIC):
            raise ValueError(f"unknown boundary_policy {self.boundary_policy!r}")


def default_gen_config(spec: RveSpec, **overrides) -> GenConfig:
    """GenConfig with perturb_radius = fiber_radius / 2 unless overridden."""
    overrides.setdefault("perturb_radius", 0.5 * spec.fiber_radius)
    return GenConfig(**overrides)


def default_bin_edges(fiber_radius: float, n_bins: int = 30) -> np.ndarray:
    """Uniform NND bins spanning [2r, 6r] (center-to-center distances)."""
    return np.linspace(2.0 * fiber_radius, 6.0 * fiber_radius, n_bins + 1)


# ---------------------------------------------------------------------------
# staggered initialization
# ---------------------------------------------------------------------------

def _staggered_sites(spec: RveSpec, pitch: float, policy: str) -> np.ndarray:
    """All lattice sites of a staggered (hexagonal-like) lattice of given pitch."""
    row_pitch = pitch * math.sqrt(3.0) / 2.0
    r = spec.fiber_radius
    tol = 1e-9 * max(spec.width, spec.height)
    sites = []
    if policy == CONTAINED:
        x_lo, x_hi = r, spec.width - r
        y_lo, y_hi = r, spec.height - r
        i = 0
        while True:
            y = y_lo + i * row_pitch
            if y > y_hi + tol:
                break
            x = x_lo + (i % 2) * pitch / 2.0
            while x <= x_hi + tol:
                sites.append((x, y))
                x += pitch
            i += 1
    else:
        # Periodic tiling: snap the pitch so rows and columns wrap exactly.
        ncols = max(1, int(spec.width // pitch))
        nrows = max(2, int(spec.height // row_pitch))
        nrows -= nrows % 2  # stagger needs an even row count to wrap
        if nrows < 2:
            return np.zeros((0, 2))
        px = spec.width / ncols
        py = spec.height / nrows
        if px < pitch or math.hypot(px / 2.0, py) < pitch:
            return np.zeros((0, 2))
        for i in range(nrows):
            for j in range(ncols):
                sites.append(((i % 2) * px / 2.0 + j * px, i * py))
    return np.asarray(sites, dtype=float).reshape(-1, 2)


def init_staggered(spec: RveSpec, boundary_policy: str = CONTAINED) -> Rve:
    """Place fibers on the densest staggered lattice that hosts them all.

    Raises InfeasibleSpecError when no admissible pitch fits n_fibers.
    """
    pitch_min = spec.min_center_distance
    usable_w = spec.width if boundary_policy == PERIODIC else spec.width - 2 * spec.fiber_radius
    usable_h = spec.height if boundary_policy == PERIODIC else spec.height - 2 * spec.fiber_radius
    if usable_w <= 0 or usable_h <= 0:
        raise InfeasibleSpecError("domain too small for a single fiber")
    # Hexagonal area estimate, then shrink until enough sites fit.
    pitch = max(
        pitch_min,
        1.1 * math.sqrt(2.0 * usable_w * usable_h / (math.sqrt(3.0) * spec.n_fibers)),
    )
    while pitch >= pitch_min:
        sites = _staggered_sites(spec, pitch, boundary_policy)
        if len(sites) >= spec.n_fibers:
            return Rve(spec, sites[: spec.n_fibers])
        if pitch == pitch_min:
            break
        pitch = max(pitch_min, pitch * 0.98)
    raise InfeasibleSpecError(
        f"staggered lattice cannot host {spec.n_fibers} fibers of radius "
        f"{spec.fiber_radius} (min gap {spec.min_gap}) in a "
        f"{spec.width} x {spec.height} domain"
    )


# ---------------------------------------------------------------------------
# distances and histograms
# ---------------------------------------------------------------------------

def _pairwise_deltas(centers: np.ndarray, spec: RveSpec, policy: str) -> np.ndarray:
    d = centers[:, None, :] - centers[None, :, :]
    if policy == PERIODIC:
        box = np.array([spec.width, spec.height])
        d -= box * np.round(d / box)
    return d


def distance_matrix(rve: Rve, boundary_policy: str = CONTAINED) -> np.ndarray:
    """Symmetric matrix of center-to-center distances (periodic images honored)."""
    if len(rve.centers) < 2:
        raise ValueError("distance_matrix needs at least 2 fibers")
    d = _pairwise_deltas(rve.centers, rve.spec, boundary_policy)
    return np.sqrt((d**2).sum(axis=-1))


def nnd(rve: Rve, boundary_policy: str = CONTAINED) -> np.ndarray:
    """Per-fiber nearest-neighbor center distance."""
    dm = distance_matrix(rve, boundary_policy)
    np.fill_diagonal(dm, np.inf)
    return dm.min(axis=1)


def nnd_histogram(values: np.ndarray, bin_edges: np.ndarray) -> NndHistogram:
    """Histogram NND values on given edges; out-of-range values are clipped in."""
    edges = np.asarray(bin_edges, dtype=float)
    v = np.clip(np.asarray(values, dtype=float), edges[0], edges[-1])
    counts, _ = np.histogram(v, bins=edges)
    return NndHistogram(edges, counts / counts.sum())


def kl_divergence(p: NndHistogram, q: NndHistogram) -> float:
    """KL divergence sum(p * ln(p/q)) with empty q bins smoothed to KL_EPS.

    Exactly 0 for p == q; clamped at 0 against smoothing round-off.
    """
    if p.bin_edges.shape != q.bin_edges.shape or not np.allclose(
        p.bin_edges, q.bin_edges, rtol=0, atol=1e-12
    ):
        raise ValueError("histograms must share identical bin edges")
    return _kl_from_probs(p.probabilities, _smooth(q.probabilities))


def _smooth(q: np.ndarray) -> np.ndarray:
    return np.where(q > 0, q, KL_EPS)


def _kl_from_probs(p: np.ndarray, q_smoothed: np.ndarray) -> float:
    mask = p > 0
    val = float(np.sum(p[mask] * np.log(p[mask] / q_smoothed[mask])))
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# perturbation
# ---------------------------------------------------------------------------

def _uniform_in_disk(rng: np.random.Generator, radius: float) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * math.pi)
    rho = radius * math.sqrt(rng.uniform(0.0, 1.0))
    return np.array([rho * math.cos(theta), rho * math.sin(theta)])


def _candidate_ok(centers, idx, new_center, spec, policy):
    """True when fiber idx at new_center stays in bounds and clears every other fiber."""
    r = spec.fiber_radius
    if policy == CONTAINED:
        if not (r <= new_center[0] <= spec.width - r and r <= new_center[1] <= spec.height - r):
            return False, None
    d = centers - new_center
    if policy == PERIODIC:
        box = np.array([spec.width, spec.height])
        d -= box * np.round(d / box)
    dist = np.sqrt((d**2).sum(axis=1))
    dist[idx] = np.inf
    if dist.min() < spec.min_center_distance:
        return False, None
    return True, dist


def _wrap(center, spec):
    return np.mod(center, [spec.width, spec.height])


def perturb_once(
    rve: Rve,
    config: GenConfig,
    mode: str,
    target: NndHistogram | None = None,
    rng: np.random.Generator | None = None,
):
    """Try one random fiber displacement; returns (accepted, new_rve).

    mode "shuffle" accepts any non-intersecting move; mode "match" additionally
    requires the KL divergence to the target NND histogram to strictly decrease.
    A rejected move returns the input arrangement unchanged.
    """
    if mode not in ("shuffle", "match"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "match" and target is None:
        raise ValueError("mode 'match' requires a target histogram")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    spec = rve.spec
    idx = int(rng.integers(len(rve.centers)))
    step = _uniform_in_disk(rng, config.perturb_radius)
    cand = rve.centers[idx] + step
    if config.boundary_policy == PERIODIC:
        cand = _wrap(cand, spec)
    ok, _ = _candidate_ok(rve.centers, idx, cand, spec, config.boundary_policy)
    if not ok:
        return False, rve
    if mode == "match":
        kl_old = kl_divergence(
            nnd_histogram(nnd(rve, config.boundary_policy), target.bin_edges), target
        )
        new = rve.copy()
        new.centers[idx] = cand
        kl_new = kl_divergence(
            nnd_histogram(nnd(new, config.boundary_policy), target.bin_edges), target
        )
        if kl_new >= kl_old:
            return False, rve
        return True, new
    new = rve.copy()
    new.centers[idx] = cand
    return True, new


def generate(spec: RveSpec, target: NndHistogram, config: GenConfig):
    """Two-phase generation: shuffle, then greedy NND-histogram matching.

    Phase 1 perturbs until the accepted count exceeds
    config.phase1_factor * n_fibers. Phase 2 keeps perturbing, accepting only
    KL-improving moves, until KL <= config.kl_threshold; hitting
    config.max_iterations first raises GenerationError with the best
    arrangement attached.

    Returns (rve, trace) where trace lists the KL value after each accepted
    phase-2 move (strictly decreasing by construction).
    """
    rve = init_staggered(spec, config.boundary_policy)
    rng = np.random.default_rng(config.rng_seed)
    policy = config.boundary_policy
    centers = rve.centers.copy()
    n = spec.n_fibers

    # Distance matrix maintained incrementally across accepted moves.
    dm = distance_matrix(Rve(spec, centers), policy)
    np.fill_diagonal(dm, np.inf)

    def try_move():
        idx = int(rng.integers(n))
        step = _uniform_in_disk(rng, config.perturb_radius)
        cand = centers[idx] + step
        if policy == PERIODIC:
            cand = _wrap(cand, spec)
        ok, dist = _candidate_ok(centers, idx, cand, spec, policy)
        return idx, cand, ok, dist

    def apply_move(idx, cand, dist):
        centers[idx] = cand
        dm[idx, :] = dist
        dm[:, idx] = dist
        dm[idx, idx] = np.inf

    # Phase 1: shuffle.
    accepted = 0
    attempts = 0
    attempt_cap = 1000 * config.phase1_factor * n
    while accepted <= config.phase1_factor * n:
        idx, cand, ok, dist = try_move()
        attempts += 1
        if ok:
            apply_move(idx, cand, dist)
            accepted += 1
        if attempts > attempt_cap:
            raise RuntimeError(
                f"phase 1 stalled after {attempts} attempts "
                f"({accepted} accepted); perturb_radius may be too large"
            )

    q = _smooth(target.probabilities)
    edges = target.bin_edges

    def current_kl(matrix):
        h = nnd_histogram(matrix.min(axis=1), edges)
        return _kl_from_probs(h.probabilities, q)

    kl = current_kl(dm)
    trace = []
    # Phase 2: greedy matching.
    for _ in range(config.max_iterations):
        if kl <= config.kl_threshold:
            return Rve(spec, centers.copy()), trace
        idx, cand, ok, dist = try_move()
        if not ok:
            continue
        dm_new = dm.copy()
        dm_new[idx, :] = dist
        dm_new[:, idx] = dist
        dm_new[idx, idx] = np.inf
        kl_new = current_kl(dm_new)
        if kl_new < kl:
            apply_move(idx, cand, dist)
            kl = kl_new
            trace.append(kl)
    if kl <= config.kl_threshold:
        return Rve(spec, centers.copy()), trace
    raise GenerationError(
        f"KL {kl:.4g} above threshold {config.kl_threshold} after "
        f"{config.max_iterations} phase-2 iterations",
        Rve(spec, centers.copy()),
        kl,
        trace,
    )


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def rasterize(rve: Rve, resolution: int, boundary_policy: str = CONTAINED) -> np.ndarray:
    """Boolean phase grid (True = fiber), cell tagged by its center point.

    Row index follows physical y (row 0 at the bottom of the domain).
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    spec = rve.spec
    nx = resolution
    ny = max(1, round(resolution * spec.height / spec.width))
    xs = (np.arange(nx) + 0.5) * spec.width / nx
    ys = (np.arange(ny) + 0.5) * spec.height / ny
    gx, gy = np.meshgrid(xs, ys)
    grid = np.zeros((ny, nx), dtype=bool)
    r2 = spec.fiber_radius**2
    for cx, cy in rve.centers:
        dx = gx - cx
        dy = gy - cy
        if boundary_policy == PERIODIC:
            dx -= spec.width * np.round(dx / spec.width)
            dy -= spec.height * np.round(dy / spec.height)
        grid |= dx * dx + dy * dy <= r2
    return grid


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

RVE_MAGIC = "# microfrac rve v1"
HIST_MAGIC = "# microfrac nnd-histogram v1"


def save_rve(rve: Rve, path) -> None:
    """Line-oriented text: spec header then one 'x y' pair per fiber (9 sig digits)."""
    spec = rve.spec
    lines = [
        RVE_MAGIC,
        f"width={spec.width:.9g}",
        f"height={spec.height:.9g}",
        f"n_fibers={spec.n_fibers}",
        f"fiber_radius={spec.fiber_radius:.9g}",
        f"min_gap={spec.min_gap:.9g}",
    ]
    lines += [f"{x:.9g} {y:.9g}" for x, y in rve.centers]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_rve(path) -> Rve:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != RVE_MAGIC:
        raise ValueError(f"{path}: not a microfrac rve file")
    header = {}
    body_start = 1
    for ln in lines[1:]:
        if "=" not in ln:
            break
        key, val = ln.split("=", 1)
        header[key] = val
        body_start += 1
    spec = RveSpec(
        width=float(header["width"]),
        height=float(header["height"]),
        n_fibers=int(header["n_fibers"]),
        fiber_radius=float(header["fiber_radius"]),
        min_gap=float(header["min_gap"]),
    )
    centers = np.array(
        [[float(tok) for tok in ln.split()] for ln in lines[body_start:]], dtype=float
    )
    return Rve(spec, centers)


def save_histogram(hist: NndHistogram, path) -> None:
    """Header 'bins=<n>', then 'edge_lo edge_hi probability' rows."""
    lines = [HIST_MAGIC, f"bins={len(hist.probabilities)}"]
    for lo, hi, p in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.probabilities):
        lines.append(f"{lo:.9g} {hi:.9g} {p:.9g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_histogram(path) -> NndHistogram:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    start = 0
    if lines and lines[0].startswith("#"):
        start = 1
    if start >= len(lines) or not lines[start].startswith("bins="):
        raise ValueError(f"{path}: missing 'bins=' header")
    n = int(lines[start].split("=", 1)[1])
    rows = [[float(tok) for tok in ln.split()] for ln in lines[start + 1 :]]
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(rows)}")
    edges = [rows[0][0]] + [row[1] for row in rows]
    probs = np.array([row[2] for row in rows])
    # Rows carry rounded probabilities; renormalize the residual away.
    probs = probs / probs.sum()
    return NndHistogram(np.array(edges), probs)


def assert_no_intersections(rve: Rve, boundary_policy: str = CONTAINED) -> None:
    """Exhaustive pairwise check of the minimum center-distance invariant."""
    dm = distance_matrix(rve, boundary_policy)
    np.fill_diagonal(dm, np.inf)
    closest = dm.min()
    if closest < rve.spec.min_center_distance:
        raise AssertionError(
            f"fiber pair at distance {closest:.6g} violates minimum "
            f"{rve.spec.min_center_distance:.6g}"
        )
