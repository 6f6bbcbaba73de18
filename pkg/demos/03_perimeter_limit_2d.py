"""Square and disk: scale scans against the boundary integral of F."""

from h12perim import density, functionals as fn, kernels, shapes
from h12perim.field import Grid

phi = kernels.phi_bandpass(2)
grid = Grid(2, 1.0, 4096)
sched = fn.dyadic_schedule(2.0**-5, 6)

for shape in (shapes.Box((0.25, 0.25), (0.5, 0.5)), shapes.Ball((0.5, 0.5), 0.25)):
    oracle = density.boundary_integral(shape, phi)
    tr = fn.scale_scan(shapes.rasterize(shape, grid), "localized", sched, kernel=phi)
    print(f"{type(shape).__name__}: perimeter {shapes.perimeter(shape):.4f}")
    for r, v in tr.entries:
        print(f"  r = {r:.2e}   value = {v:.6f}")
    print(f"  limit {tr.limit_estimate:.6f} vs boundary integral {oracle:.6f} "
          f"({100 * (tr.limit_estimate / oracle - 1):+.2f}%)")
