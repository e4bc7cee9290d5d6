"""Shared fixtures: a tiny end-to-end pipeline environment sized for seconds,
run twice so determinism checks can compare bytes."""

import shutil
from pathlib import Path

import numpy as np
import pytest

from microfrac import constitutive as C
from microfrac import pipeline as P
from microfrac import rve as R

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def tiny_env(tmp_path_factory):
    """Config + target + material files for a 4-fiber desk pipeline."""
    work = tmp_path_factory.mktemp("tiny_pipeline")
    spec = R.RveSpec(18.0, 18.0, 4, 3.5, 0.05)
    edges = R.default_bin_edges(3.5)
    uniform = R.NndHistogram(edges, np.full(30, 1.0 / 30.0))
    cfg = R.default_gen_config(spec, rng_seed=555, kl_threshold=1e9)
    shuffled, _ = R.generate(spec, uniform, cfg)
    R.save_histogram(R.nnd_histogram(R.nnd(shuffled), edges), work / "target.txt")
    C.save_material_file(
        work / "mat.txt",
        C.default_matrix_params(mu_visc=0.5),
        C.default_fiber_params(),
        C.default_czm_params(),
    )
    config = P.PipelineConfig(
        width=18.0, height=18.0, n_fibers=4, fiber_radius=3.5, min_gap=0.05,
        kl_threshold=0.8,  # 4-fiber NND histograms are quarter-quantized
        max_iterations=50_000,
        target_histogram=str(work / "target.txt"),
        material_file=str(work / "mat.txt"),
        elems_per_diameter=6, target_strain=0.03, n_increments=30,
        image_size=64, n_val=1, master_seed=7, out_dir=str(work / "out"),
    )
    P.save_config(config, work / "config.txt")
    return {"work": work, "config": config}


def run_chain(config, n=3):
    gen = P.cmd_gen(config, n)
    sim = P.cmd_simulate(config)
    ren = P.cmd_render(config)
    data = P.cmd_dataset(config)
    return {"gen": gen, "simulate": sim, "render": ren, "dataset": data}


@pytest.fixture(scope="session")
def pipeline_double_run(tiny_env):
    """The tiny pipeline executed twice into sibling output trees."""
    from dataclasses import replace

    config_a = tiny_env["config"]
    records_a = run_chain(config_a)
    out_b = str(Path(tiny_env["work"]) / "out_b")
    config_b = replace(config_a, out_dir=out_b)
    records_b = run_chain(config_b)
    return {
        "config_a": config_a,
        "config_b": config_b,
        "out_a": Path(config_a.out_dir),
        "out_b": Path(out_b),
        "records_a": records_a,
        "records_b": records_b,
    }
