"""Subspace dimension K and oracle agreement as the reconstruction tolerance varies.

    python3 scripts/rank_vs_delta.py --trials 1000
"""

import argparse
import time

import numpy as np

from dsvdphat.config import load_config
from dsvdphat.dsvd import brute_force_srp, build_index, project, search
from dsvdphat.geometry import build_steering_matrix


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--deltas", default="0.5,1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7")
    p.add_argument("--trials", type=int, default=1000, help="random unit-modulus vectors per delta")
    p.add_argument("--seed", type=int, default=2024)
    a = p.parse_args()

    cfg = load_config(a.config)
    geom = cfg.geometry_obj()
    W = build_steering_matrix(geom, cfg.grid_obj(geom), cfg.stft.frame_size)
    print(f"Q = {W.shape[0]}, P(N/2+1) = {W.shape[1]}")
    print(f"{'delta':>8} {'K':>4} {'energy kept':>12} {'agree %':>8} {'build s':>8}")
    for d in (float(x) for x in a.deltas.split(",")):
        t0 = time.perf_counter()
        index = build_index(W, d, cfg.dsvd.backend)
        secs = time.perf_counter() - t0
        rng = np.random.default_rng(a.seed)
        agree = 0
        for _ in range(a.trials):
            X = np.exp(2j * np.pi * rng.uniform(size=W.shape[1]))
            agree += search(index, project(index, X), X).grid_index == brute_force_srp(W, X)[0]
        print(f"{d:8.0e} {index.K:4d} {index.energy_ratio:12.8f} {100 * agree / a.trials:8.1f} {secs:8.2f}")


if __name__ == "__main__":
    main()
