"""Time the numba and numpy paths of each hot kernel.

    python3 bench/bench_kernels.py [--n 9000] [--d 32] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from openal import _kernels as K


def cases(n, d, rng):
    Z = rng.normal(size=(n, d))
    means = rng.normal(size=(9, d))
    A = rng.normal(size=(9, d, d))
    invs = A @ A.transpose(0, 2, 1) / d + np.eye(d)
    C = Z[:9].copy()
    m = min(n, 2000)
    d0 = ((Z[:m, None] - means[None, :3]) ** 2).sum(-1).min(axis=1)
    return {
        "min_mahalanobis": ((Z, means, invs), K.min_mahalanobis_numpy, K.min_mahalanobis_numba),
        "nearest_centroid": ((Z, C), K.nearest_centroid_numpy, K.nearest_centroid_numba),
        "kcenter_greedy": ((Z[:m], d0, 100), K.kcenter_greedy_numpy, K.kcenter_greedy_numba),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=9000)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (a, f_np, f_nb) in cases(args.n, args.d, rng).items():
        f_nb(*a)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
