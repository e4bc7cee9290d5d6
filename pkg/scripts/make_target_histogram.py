#!/usr/bin/env python3
"""Regenerate the frozen reference NND target histogram used by the test suite.

The target blends the NND histogram equilibrium of shuffled arrangements
(averaged over 50 seeds) with a more-ordered distribution, so phase-2
matching has actual work to do from any starting seed.
"""

import argparse
from pathlib import Path

import numpy as np

from microfrac import rve as R

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "target_nnd.txt"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--order-weight", type=float, default=0.45)
    args = ap.parse_args()

    spec = R.RveSpec(54.0, 54.0, 46, 3.5, 0.05)
    edges = R.default_bin_edges(spec.fiber_radius)
    uniform = R.NndHistogram(edges, np.full(len(edges) - 1, 1.0 / (len(edges) - 1)))

    hists = []
    for seed in range(1000, 1000 + args.seeds):
        cfg = R.default_gen_config(spec, rng_seed=seed, kl_threshold=1e9)
        shuffled, _ = R.generate(spec, uniform, cfg)
        hists.append(R.nnd_histogram(R.nnd(shuffled), edges).probabilities)
    eq = np.mean(hists, axis=0)
    eq /= eq.sum()

    order = np.zeros_like(eq)
    order[1] = 1.0
    probs = (1.0 - args.order_weight) * eq + args.order_weight * order
    probs /= probs.sum()

    args.out.parent.mkdir(parents=True, exist_ok=True)
    R.save_histogram(R.NndHistogram(edges, probs), args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
