"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads match the attack/reconstruction hot paths: a default hash grid
queried at 64 rays x 64 samples, and a ~15k-face mesh rasterized at 64x64.
"""
import argparse
import timeit

import numpy as np

from fieldadv._kernels import _pykernels as py
from fieldadv.camera import Camera, look_at
from fieldadv.fields import GridConfig, HashGrid
from fieldadv.meshing import extract_isosurface

try:
    from fieldadv._kernels import _ckernels as ck
except ImportError:
    ck = None


def hash_workload(rng):
    cfg = GridConfig()
    grid = HashGrid(cfg, (-1.0,) * 3, (1.0,) * 3)
    table = rng.normal(scale=1e-2, size=(cfg.num_levels, 2 ** cfg.table_size_log2, cfg.features_per_level))
    u = rng.random((4096, 3))
    g = rng.normal(size=(4096, cfg.num_levels * cfg.features_per_level))
    return u, table, grid.resolutions, grid.dense, g


def raster_workload():
    m = extract_isosurface(lambda p: 10.0 * (0.7 - np.linalg.norm(p, axis=1)), 48)
    cam = Camera(look_at((0.4, 0.6, 2.4)), np.deg2rad(60.0), 64, 64)
    return np.ascontiguousarray(cam.project(m.V)), np.ascontiguousarray(m.F, dtype=np.int64), m.m


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    u, table, res, dense, g = hash_workload(rng)
    scr, F, nf = raster_workload()
    cases = {
        "hash_encode_fwd (4096 pts)": lambda k: k.hash_encode_fwd(u, table, res, dense),
        "hash_encode_bwd (4096 pts)": lambda k: k.hash_encode_bwd(u, table, g, res, dense, True, True),
        f"raster_faces ({nf} faces, 64x64)": lambda k: k.raster_faces(scr, F, 64, 64),
    }
    print(f"{'kernel':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if ck is None:
            print(f"{name:36s} {tp:10.2f} {'n/a':>10s}")
            continue
        tc = min(timeit.repeat(lambda: fn(ck), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
