"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speedup. Exits with status 1 if the compiled extension is not built.
"""

import argparse
import sys
import timeit

import numpy as np

from pshape import _kernels_py as pure
from pshape.envs import GridLayout

try:
    from pshape import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    n = 2048
    rewards, values = rng.normal(size=n), rng.normal(size=n)
    dones = (rng.random(n) < 0.01).astype(np.float64)
    free = (~GridLayout.named("fourrooms").walls).astype(np.uint8)
    pts, cents = rng.normal(size=(5000, 64)), rng.normal(size=(8, 64))
    imgs = rng.normal(size=(16, 32, 32, 3))
    cols = pure.im2col(imgs, 3, 3, 2)
    return {
        "gae (2048 steps)": lambda m: m.gae(rewards, values, dones, 0.3, 0.99, 0.95),
        "bfs_distances (17x17)": lambda m: m.bfs_distances(free, 1, 1),
        "nearest_centroid (5000x64, k=8)": lambda m: m.nearest_centroid(pts, cents),
        "im2col (16x32x32x3, 3x3/2)": lambda m: m.im2col(imgs, 3, 3, 2),
        "col2im (16x32x32x3, 3x3/2)": lambda m: m.col2im(cols, 32, 32, 3, 3, 3, 2),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension pshape._kernels is not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(pure), number=3, repeat=args.repeat)) / 3
        t_c = min(timeit.repeat(lambda: fn(compiled), number=3, repeat=args.repeat)) / 3
        print(f"{name:34s} {1e3 * t_py:10.3f} {1e3 * t_c:12.3f} {t_py / t_c:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
