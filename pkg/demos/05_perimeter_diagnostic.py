"""Delta-cube census: a disk against a refining checkerboard."""

from h12perim import diagnostic as dg, shapes
from h12perim.field import Grid

for n in (1024, 2048):
    grid = Grid(2, 1.0, n)
    sched = [1 / 32, 1 / 64, 1 / 128]
    for name, u in (("disk", shapes.rasterize(shapes.Ball((0.5, 0.5), 0.25), grid)),
                    ("checkerboard", dg.refining_checkerboard(grid, depth=4))):
        rep = dg.finite_perimeter_verdict(u, sched)
        counts = [c["intermediate_count"] for c in rep["traces"]["census"]]
        growth = ", ".join(f"{g:.2f}" for g in rep["traces"]["growth"])
        print(f"N = {n:4d}  {name:12s}  counts {counts}  growth [{growth}]  -> {rep['verdict']}")
