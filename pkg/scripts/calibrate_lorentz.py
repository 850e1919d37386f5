"""Regenerate the frozen Lorentz-harness constants.

Runs a wide sweep with its own seed (disjoint from the test seeds) and stores
the observed maxima times a safety margin in ``src/wavemap_lab/data``.

    python3 scripts/calibrate_lorentz.py [--trials 4000]
"""

import argparse
import time

from wavemap_lab import analysis

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--margin", type=float, default=1.25)
    args = ap.parse_args()
    t0 = time.perf_counter()
    data = analysis.calibrate_constants(args.trials, args.seed, args.margin, analysis.CONSTANTS_FILE)
    for k, v in data["observed_max"].items():
        print(f"{k:10s} observed max {v:.5f}  frozen constant {data['constants'][k]:.5f}")
    print(f"{args.trials} trials in {time.perf_counter() - t0:.1f}s -> {analysis.CONSTANTS_FILE}")
