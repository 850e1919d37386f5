"""Lorentz quasinorms on grid functions.

The decreasing rearrangement turns any grid function into a step function on
(0, |domain|), and the L^{p,r} quasinorm is an explicit sum over the steps.

    python3 demos/04_lorentz_spaces.py
"""

import math

import numpy as np

from wavemap_lab import analysis
from wavemap_lab.analysis import LorentzSpec, lorentz_norm_weighted
from wavemap_lab.fields import GridSpec

grid = GridSpec(2, 32)
w = np.full(grid.shape, grid.cell_volume)

# indicator of a square: every L^{p,r} norm is a closed form in its measure
f = np.zeros(grid.shape)
f[:8, :8] = 1.0
meas = f.sum() * grid.cell_volume
for p, r in ((4, 1), (4, 2), (4, 4), (4, math.inf)):
    print(f"L^({p},{r}) of indicator: {lorentz_norm_weighted(f, LorentzSpec(p, r), w):.6f}"
          f"   closed form {analysis.indicator_lorentz_norm(meas, p, r):.6f}")

# |x|^-1 in the plane: weak L^2 stays put while L^2 grows with resolution
print()
for n in (16, 32, 64, 128):
    g = GridSpec(2, n)
    k = analysis.riesz_kernel(g, 1.0)
    wk = np.full(g.shape, g.cell_volume)
    print(f"n={n:4d}  L^(2,inf) {lorentz_norm_weighted(k, LorentzSpec(2, math.inf), wk):.4f}"
          f"   L^2 {analysis.lp_norm(k, 2, wk):.4f}")

# the inequality harness against the frozen constants (4D, ~40 s)
print()
report = analysis.lorentz_inequality_harness(1000, seed=0)
for name, e in report["inequalities"].items():
    print(f"{name:10s} max ratio {e['max_ratio']:.4f}  bound {e['bound']:.4f}  {e['statement']}")
