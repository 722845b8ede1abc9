"""Watch the quadrature correlation follow the ebit phase.

Run: python3 demos/03_phase_sweep.py
"""
import math

import numpy as np

from timebin_ebit import sample_pair
from timebin_ebit.homodyne import measure_correlations

ETA = 0.605
rng = np.random.default_rng(11)

print(" chi/pi   <x1 x2>   eta cos(chi)/4")
for chi in np.linspace(0, math.pi, 9):
    x1, x2 = sample_pair(chi, ETA, rng=rng, size=200_000)
    print(f"  {chi / math.pi:5.3f}  {np.mean(x1 * x2):+.4f}   {ETA * math.cos(chi) / 4:+.4f}")

# At phase pi/2 the x1-x2 correlation vanishes and reappears between x1 and y2.
xx, sxx, xy, sxy = measure_correlations(math.pi / 2, ETA, n=400_000, rng=rng)
print(f"phase pi/2: <x1 x2> = {xx:+.4f} +- {sxx:.4f}, <x1 y2> = {xy:+.4f} +- {sxy:.4f}")
