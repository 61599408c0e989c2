"""Compare the numba and numpy time-tag kernels.

    python3 benchmarks/bench_kernels.py [--pairs 2000000] [--repeat 5]

Streams mimic a 2.2 mW acquisition: Poisson pair emission, 16-18 % arm
efficiencies and 500 cps dark counts. Both backends must agree exactly.
"""

import argparse
import time

import numpy as np

from spdcsource import kernels
from spdcsource._accel import HAVE_NUMBA


def make_streams(n_pairs, rate=5e7, seed=0):
    rng = np.random.default_rng(seed)
    duration_ps = int(n_pairs / rate * 1e12)
    t = np.sort(rng.integers(0, duration_ps, n_pairs, dtype=np.int64))
    ids = np.arange(n_pairs, dtype=np.int64)

    def arm(eta):
        keep = rng.random(n_pairs) < eta
        n_dark = rng.poisson(500 * duration_ps * 1e-12)
        times = np.concatenate([t[keep], rng.integers(0, duration_ps, n_dark, dtype=np.int64)])
        labels = np.concatenate([ids[keep], np.full(n_dark, -1, np.int64)])
        order = np.argsort(times, kind="stable")
        return times[order], labels[order]

    return arm(0.156) + arm(0.18)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pairs", type=int, default=2_000_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    t_a, id_a, t_b, id_b = make_streams(args.pairs)
    window = 2400
    print(f"{args.pairs} generated pairs, {t_a.size} + {t_b.size} detections, numba available: {HAVE_NUMBA}")

    cases = [
        ("count_coincidences", kernels.count_coincidences_numpy, kernels.count_coincidences_jit,
         (t_a, t_b, id_a, id_b, np.int64(window))),
        ("merge_streams", kernels.merge_streams_numpy, kernels.merge_streams_jit, (t_a, t_b)),
    ]
    for name, np_fn, jit_fn, fn_args in cases:
        t_np, out_np = best_of(lambda: np_fn(*fn_args), args.repeat)
        line = f"{name:20s} numpy {t_np * 1e3:8.2f} ms"
        if HAVE_NUMBA:
            jit_fn(*fn_args)  # compile outside the timing
            t_jit, out_jit = best_of(lambda: jit_fn(*fn_args), args.repeat)
            same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(out_np, out_jit))
            line += f"   numba {t_jit * 1e3:8.2f} ms   speedup {t_np / t_jit:5.1f}x   identical {same}"
        print(line)


if __name__ == "__main__":
    main()
