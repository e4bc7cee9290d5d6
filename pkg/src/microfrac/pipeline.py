"""End-to-end orchestration: RVE generation, simulation, rendering, dataset
assembly, metric reports, and inspection support.

Every stage is idempotent for a fixed config and master seed: re-running
writes byte-identical manifests, curves, snapshots, and images. Wall-clock
timings are therefore kept out of manifests and go to a `timings.txt`
sidecar. Per-sample failures are recorded, never fatal to the batch.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import constitutive as con
from . import imaging as img
from . import losses as los
from . import rve as rv
from . import solver as sol


@dataclass(frozen=True)
class PipelineConfig:
    """Flat pipeline settings; mirrors the key=value config file."""

    # rve geometry + generation
    width: float = 54.0
    height: float = 54.0
    n_fibers: int = 46
    fiber_radius: float = 3.5
    min_gap: float = 0.05
    boundary_policy: str = "contained"
    perturb_radius: float = 0.0  # 0 -> 0.5 * fiber_radius
    phase1_factor: int = 20
    kl_threshold: float = 0.05
    max_iterations: int = 200_000
    target_histogram: str = ""
    # simulation
    material_file: str = ""  # empty -> built-in table defaults
    elems_per_diameter: int = 20
    target_strain: float = 0.02
    n_increments: int = 100
    max_cutbacks: int = 8
    interphase_eps_t: float = sol.DEFAULT_INTERPHASE_EPS_T  # <= 0 disables
    # rendering
    image_size: int = 256
    stress_lo: float = 0.0
    stress_hi: float = 93.0
    # dataset
    n_val: int = 2
    # seeds and output
    master_seed: int = 0
    out_dir: str = "out"

    def rve_spec(self) -> rv.RveSpec:
        return rv.RveSpec(self.width, self.height, self.n_fibers,
                          self.fiber_radius, self.min_gap)

    def gen_config(self, seed: int) -> rv.GenConfig:
        radius = self.perturb_radius if self.perturb_radius > 0 else 0.5 * self.fiber_radius
        return rv.GenConfig(
            perturb_radius=radius, phase1_factor=self.phase1_factor,
            kl_threshold=self.kl_threshold, max_iterations=self.max_iterations,
            rng_seed=seed, boundary_policy=self.boundary_policy,
        )

    def schedule(self) -> sol.LoadSchedule:
        return sol.LoadSchedule(
            target_strain=self.target_strain, n_increments=self.n_increments,
            max_cutbacks=self.max_cutbacks,
        )

    def materials(self):
        if self.material_file:
            return con.load_material_file(self.material_file)
        return (con.default_matrix_params(), con.default_fiber_params(),
                con.default_czm_params())


_BOOLS = ()
_STRINGS = ("boundary_policy", "target_histogram", "material_file", "out_dir")
_INTS = ("n_fibers", "phase1_factor", "max_iterations", "elems_per_diameter",
         "n_increments", "max_cutbacks", "image_size", "n_val", "master_seed")


def load_config(path, **overrides) -> PipelineConfig:
    """Parse the flat key=value config file; unknown keys are rejected."""
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {raw!r}")
            key, val = (tok.strip() for tok in line.split("=", 1))
            values[key] = val
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    parsed = {}
    for key, val in values.items():
        if key in _STRINGS:
            parsed[key] = val
        elif key in _INTS:
            parsed[key] = int(val)
        else:
            parsed[key] = float(val)
    parsed.update(overrides)
    config = PipelineConfig(**parsed)
    for name in ("target_histogram", "material_file"):
        ref = getattr(config, name)
        if ref and not Path(ref).exists():
            raise FileNotFoundError(f"{path}: {name} points at missing file {ref}")
    return config


def save_config(config: PipelineConfig, path, skip=()) -> None:
    lines = ["# microfrac pipeline config"]
    for f in fields(PipelineConfig):
        if f.name not in skip:
            lines.append(f"{f.name}={getattr(config, f.name)}")
    Path(path).write_text("\n".join(lines) + "\n")


def sample_id(index: int) -> str:
    return f"s{index:04d}"


def sample_seed(master_seed: int, index: int) -> int:
    """Stable per-sample seed derived from the master seed."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


@dataclass
class SampleRecord:
    id: str
    status: str           # generated | simulated | rendered | failed
    stage: str            # stage that produced this record
    kl: float | None = None
    esodi_reached: bool | None = None
    esodi_index: int | None = None
    error: str = ""


def write_records(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_records(path):
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(SampleRecord(**json.loads(line)))
    return records


class _Timings:
    """Wall-clock diagnostics sidecar; intentionally outside the manifests."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "timings.txt"

    def record(self, sid, stage, seconds):
        with open(self.path, "a") as fh:
            fh.write(f"{sid} {stage} {seconds:.3f}\n")


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def _gen_one(payload):
    config, index = payload
    sid = sample_id(index)
    t0 = time.perf_counter()
    spec = config.rve_spec()
    target = rv.load_histogram(config.target_histogram)
    gen_cfg = config.gen_config(sample_seed(config.master_seed, index))
    out = Path(config.out_dir) / "rves" / f"{sid}.rve.txt"
    try:
        arrangement, trace = rv.generate(spec, target, gen_cfg)
        rv.assert_no_intersections(arrangement, gen_cfg.boundary_policy)
        kl = trace[-1] if trace else rv.kl_divergence(
            rv.nnd_histogram(rv.nnd(arrangement, gen_cfg.boundary_policy), target.bin_edges),
            target,
        )
        rv.save_rve(arrangement, out)
        rec = SampleRecord(id=sid, status="generated", stage="gen", kl=float(kl))
    except rv.GenerationError as exc:
        rec = SampleRecord(id=sid, status="failed", stage="gen",
                           kl=float(exc.final_kl), error=str(exc))
    except Exception as exc:  # spec infeasibility, IO, ...
        rec = SampleRecord(id=sid, status="failed", stage="gen", error=str(exc))
    return rec, time.perf_counter() - t0


def cmd_gen(config: PipelineConfig, n: int, jobs: int = 1):
    """Generate n seeded RVE files plus the gen manifest."""
    out_dir = Path(config.out_dir)
    (out_dir / "rves").mkdir(parents=True, exist_ok=True)
    # seeds and settings recorded next to the outputs; out_dir is implied
    save_config(config, out_dir / "config_used.txt", skip=("out_dir",))
    payloads = [(config, i) for i in range(n)]
    results = _run_pool(_gen_one, payloads, jobs)
    timings = _Timings(out_dir)
    records = []
    for (rec, seconds), (_, index) in zip(results, payloads):
        timings.record(rec.id, "gen", seconds)
        records.append(rec)
    write_records(records, out_dir / "manifest_gen.jsonl")
    return records


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_one(payload):
    config, sid = payload
    t0 = time.perf_counter()
    out_dir = Path(config.out_dir)
    try:
        arrangement = rv.load_rve(out_dir / "rves" / f"{sid}.rve.txt")
        matrix, fiber, _ = config.materials()
        mesh = sol.build_mesh(arrangement, config.elems_per_diameter)
        ring = config.interphase_eps_t if config.interphase_eps_t > 0 else None
        result = sol.run(mesh, matrix, fiber, config.schedule(), interphase_eps_t=ring)
        sims = out_dir / "sims"
        sol.save_curve(result, sims / f"{sid}.curve.csv")
        sol.save_snapshots(result, sims / f"{sid}.snap.bin")
        if not result.completed:
            return (SampleRecord(id=sid, status="failed", stage="simulate",
                                 esodi_reached=False, error=result.diagnostic),
                    time.perf_counter() - t0)
        try:
            esodi = sol.detect_esodi(result)
        except sol.EsodiNotReachedError as exc:
            return (SampleRecord(id=sid, status="failed", stage="simulate",
                                 esodi_reached=False, error=str(exc)),
                    time.perf_counter() - t0)
        rec = SampleRecord(id=sid, status="simulated", stage="simulate",
                           esodi_reached=True, esodi_index=int(esodi))
    except Exception as exc:
        rec = SampleRecord(id=sid, status="failed", stage="simulate", error=str(exc))
    return rec, time.perf_counter() - t0


def cmd_simulate(config: PipelineConfig, jobs: int = 1):
    """Simulate every generated sample; failures are isolated per sample."""
    out_dir = Path(config.out_dir)
    (out_dir / "sims").mkdir(parents=True, exist_ok=True)
    gen_records = read_records(out_dir / "manifest_gen.jsonl")
    todo = [rec.id for rec in gen_records if rec.status == "generated"]
    results = _run_pool(_simulate_one, [(config, sid) for sid in todo], jobs)
    timings = _Timings(out_dir)
    by_id = {}
    for rec, seconds in results:
        timings.record(rec.id, "simulate", seconds)
        by_id[rec.id] = rec
    records = []
    for gen_rec in gen_records:
        if gen_rec.id in by_id:
            records.append(by_id[gen_rec.id])
        else:
            records.append(SampleRecord(id=gen_rec.id, status="failed",
                                        stage="simulate", error="not generated"))
    write_records(records, out_dir / "manifest_simulate.jsonl")
    return records


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def cmd_render(config: PipelineConfig):
    """Render the triple images for every simulated sample."""
    out_dir = Path(config.out_dir)
    images = out_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    timings = _Timings(out_dir)
    sim_records = read_records(out_dir / "manifest_simulate.jsonl")
    records = []
    v_range = (config.stress_lo, config.stress_hi)
    for rec in sim_records:
        if rec.status != "simulated":
            records.append(SampleRecord(id=rec.id, status="failed", stage="render",
                                        error="not simulated"))
            continue
        t0 = time.perf_counter()
        try:
            arrangement = rv.load_rve(out_dir / "rves" / f"{rec.id}.rve.txt")
            snaps = sol.load_snapshots(out_dir / "sims" / f"{rec.id}.snap.bin")
            micro = img.render_microstructure(
                rv.rasterize(arrangement, config.image_size,
                             config.boundary_policy))
            vm = snaps.fields["von_mises"][rec.esodi_index].copy()
            vm[snaps.phase] = np.nan
            stress = img.resize(img.render_von_mises(vm, v_range=v_range),
                                config.image_size)
            ux_final = snaps.fields["ux"][-1]
            crack = img.resize(img.render_crack(ux_final, snaps.phase),
                               config.image_size)
            img.save_png(img.resize(micro, config.image_size), images / f"{rec.id}_1.png")
            img.save_png(stress, images / f"{rec.id}_2.png")
            img.save_png(crack, images / f"{rec.id}_3.png")
            records.append(SampleRecord(id=rec.id, status="rendered", stage="render",
                                        esodi_reached=True,
                                        esodi_index=rec.esodi_index))
        except Exception as exc:
            records.append(SampleRecord(id=rec.id, status="failed", stage="render",
                                        error=str(exc)))
        timings.record(rec.id, "render", time.perf_counter() - t0)
    write_records(records, out_dir / "manifest_render.jsonl")
    return records


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

def cmd_dataset(config: PipelineConfig):
    """Split rendered triples into train/val and double train by vertical flips."""
    out_dir = Path(config.out_dir)
    images = out_dir / "images"
    dataset = out_dir / "dataset"
    dataset.mkdir(parents=True, exist_ok=True)
    rendered = [r for r in read_records(out_dir / "manifest_render.jsonl")
                if r.status == "rendered"]
    ids = [r.id for r in rendered]
    train_ids, val_ids = img.split_ids(ids, config.n_val, config.master_seed)

    samples = []
    for sid in sorted(ids):
        split = "train" if sid in set(train_ids) else "val"
        paths = [f"images/{sid}_{k}.png" for k in (1, 2, 3)]
        samples.append(img.TripleSample(sid, *paths, flipped=False, split=split))
        if split == "train":
            flip_paths = []
            for k in (1, 2, 3):
                src = images / f"{sid}_{k}.png"
                dst = dataset / f"{sid}f_{k}.png"
                img.save_png(img.flip_vertical(img.load_png(src)), dst)
                flip_paths.append(f"dataset/{sid}f_{k}.png")
            samples.append(img.TripleSample(f"{sid}f", *flip_paths,
                                            flipped=True, split="train"))
    img.write_manifest(samples, dataset / "manifest.jsonl")
    return samples


# ---------------------------------------------------------------------------
# metrics / inspection / accuracy
# ---------------------------------------------------------------------------

def _paired_pngs(pred_dir, target_dir):
    pred_dir, target_dir = Path(pred_dir), Path(target_dir)
    pred = {p.name: p for p in sorted(pred_dir.glob("*.png"))}
    target = {p.name: p for p in sorted(target_dir.glob("*.png"))}
    if set(pred) != set(target):
        missing = sorted(set(pred) ^ set(target))
        raise ValueError(f"unpaired image ids: {missing}")
    if not pred:
        raise ValueError("no paired images found")
    return [(name, pred[name], target[name]) for name in sorted(pred)]


def cmd_metrics(pred_dir, target_dir, out_csv, alpha=50.0, beta=60.0, gamma=0.1):
    """Per-sample and aggregate MAE / attention losses between paired PNGs."""
    w_tr = los.WeightFunction(kind=los.TRAINING, alpha=alpha, beta=beta, gamma=gamma)
    w_val = los.WeightFunction(kind=los.VALIDATION, alpha=alpha, beta=beta, gamma=gamma)
    rows = []
    for name, pred_path, target_path in _paired_pngs(pred_dir, target_dir):
        pred = img.load_png(pred_path)
        target = img.load_png(target_path)
        rows.append((
            name,
            los.mae(pred, target),
            los.attention_loss(pred, target, w_tr),
            los.attention_loss(pred, target, w_val),
        ))
    agg = tuple(float(np.mean([r[k] for r in rows])) for k in (1, 2, 3))
    lines = ["sample,mae,att_train,att_val"]
    for name, m, at, av in rows:
        lines.append(f"{name},{m:.17g},{at:.17g},{av:.17g}")
    lines.append(f"AGGREGATE,{agg[0]:.17g},{agg[1]:.17g},{agg[2]:.17g}")
    Path(out_csv).write_text("\n".join(lines) + "\n")
    return rows, agg


def cmd_inspect(pred_dir, target_dir, out_dir, per_sheet=16):
    """Contact sheets of [target | prediction] pairs plus a label template."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _paired_pngs(pred_dir, target_dir)
    gutter = 8
    sheets = []
    for start in range(0, len(pairs), per_sheet):
        chunk = pairs[start: start + per_sheet]
        tiles = []
        for _, pred_path, target_path in chunk:
            pred = img.load_png(pred_path)
            target = img.load_png(target_path)
            h = max(pred.shape[0], target.shape[0])
            row = np.full((h, pred.shape[1] + target.shape[1] + gutter, 3), 128,
                          dtype=np.uint8)
            row[: target.shape[0], : target.shape[1]] = target
            row[: pred.shape[0], target.shape[1] + gutter:] = pred
            tiles.append(row)
        width = max(t.shape[1] for t in tiles)
        stacked = []
        for t in tiles:
            pad = np.full((t.shape[0], width - t.shape[1], 3), 128, dtype=np.uint8)
            stacked.append(np.concatenate([t, pad], axis=1))
            stacked.append(np.full((gutter, width, 3), 128, dtype=np.uint8))
        sheet = np.concatenate(stacked[:-1], axis=0)
        path = out_dir / f"inspect_{start // per_sheet:03d}.png"
        img.save_png(sheet, path)
        sheets.append(path)
    template = out_dir / "labels_template.csv"
    body = "\n".join(f"{name}," for name, _, _ in pairs)
    template.write_text("sample_id,label\n" + body + "\n")
    return sheets


def cmd_accuracy(label_csv) -> float:
    """Accuracy percentage from a G/PG/B label file."""
    return los.accuracy(los.read_labels_csv(label_csv))


# ---------------------------------------------------------------------------
# worker pool
# ---------------------------------------------------------------------------

def _run_pool(fn, payloads, jobs):
    if jobs <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with multiprocessing.Pool(processes=min(jobs, len(payloads))) as pool:
        return pool.map(fn, payloads)
