"""Scale-localized energy of 1-D piecewise constant functions.

For jumps J_i the energy r^-1 ||phi_r * u||^2 tends to c_f sum J_i^2, while
a continuous profile with the same total variation has no limit energy.
"""

import numpy as np

from h12perim import density, functionals as fn
from h12perim.field import Grid, SampledField

cf = density.c_f()
grid = Grid(1, 1.0, 2**20)
sched = fn.dyadic_schedule(2.0**-6, 7)

pc = fn.PiecewiseConstant1D([0.2, 0.5, 0.8], [0.0, 1.0, -1.0, -0.5], closure="ramp")
tr = fn.scale_scan(pc.raster(grid), "localized", sched)
print("three jumps {1, -2, 0.5}")
for r, v in tr.entries:
    print(f"  r = {r:.2e}   value = {v:.6f}")
print(f"  limit {tr.limit_estimate:.6f}, c_f sum J^2 = {fn.jump_functional_1d(pc, cf):.6f}")

x = grid.coordinates(centered=True)
tri = SampledField(grid, 2 * np.minimum(x, 1 - x))
tt = fn.scale_scan(tri, "localized", sched)
print("\ntriangle wave (same total variation as a unit jump and its return ramp)")
print(f"  value at the smallest scale {tt.values[-1]:.2e}, limit {tt.limit_estimate:.2e}")
