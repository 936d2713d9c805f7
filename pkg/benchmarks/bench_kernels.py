"""Compare the numba trial kernel with the pure-numpy batch path.

    python3 benchmarks/bench_kernels.py [--trials 300] [--repeat 3]

Both paths run the same genome over the same seeded trials; the script
reports wall time per trial and the largest score difference between them.
"""
import argparse
import time

import numpy as np

from selattn import _jit
from selattn.genome import Architecture, decode, random_genome
from selattn.trials import generate_corpus
from selattn.world import WorldConfig, scores_from_offsets, simulate


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--interneurons", type=int, default=4)
    args = ap.parse_args()

    cfg = WorldConfig()
    trials = generate_corpus(args.trials, 1).trials
    params = decode(random_genome(Architecture(args.interneurons), np.random.default_rng(0)))
    rows = []
    backends = ["numpy"] + (["numba"] if _jit.get_backend() == "numba" else [])
    scores = {}
    for be in backends:
        if be == "numba":
            simulate(params, trials[:1], cfg, backend=be)  # compile outside the timing
        sec, (off, steps, ok) = timed(lambda: simulate(params, trials, cfg, backend=be), args.repeat)
        scores[be] = scores_from_offsets(off, ok)
        rows.append((be, sec, int(steps.sum())))
    print(f"{'backend':<8}{'total s':>10}{'ms/trial':>10}{'steps/s':>14}")
    for be, sec, steps in rows:
        print(f"{be:<8}{sec:>10.3f}{1000 * sec / args.trials:>10.3f}{steps / sec:>14.0f}")
    if len(rows) == 2:
        print(f"speedup {rows[0][1] / rows[1][1]:.1f}x; max score difference "
              f"{np.max(np.abs(scores['numba'] - scores['numpy'])):.2e}")
    else:
        print("numba disabled (SELATTN_DISABLE_NUMBA) or not installed; numpy only")


if __name__ == "__main__":
    main()
