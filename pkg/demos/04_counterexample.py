"""Three stages of a compatible sequence whose smoothed energy collapses.

Each stage refines the previous one on a finer cell grid while keeping
every cell average, which keeps the Gaussian-smoothed stages close at the
earlier scale.  The normalized energy at each stage's own scale drops
below 2^-k.  Takes about 15 s.
"""

from h12perim import counterexample as cx

res = cx.build_sequence(3, log=print)
print()
for s in res.states:
    c = s.certification
    print(f"stage {s.level}: cells {s.cell_count:8d}  eps {s.eps:.3e}  energy {c['smoothness']['energy']:.4f}"
          f"  undecided {s.undecided_measure:.3f}  certified {c['ok']}")
ls = cx.limit_set(res.states)
print(f"\nlimit set measure in [{ls.lower:.4f}, {ls.upper:.4f}]")
# {phi_3 = 1} is only a proxy for the limit: most of [0, 1] is still undecided
# after three stages, so its energy stays large and the telescoping budget is
# dominated by the gap between the proxy and the last stage
for row in cx.telescoping_report(res.states):
    print(f"  eps {row['eps']:.3e}: energy of {{phi_3 = 1}} {row['energy_limit_set']:.4f}, "
          f"of stage {row['energy_stage']:.4f}, H^1/2 gap {row['gap']:.3f} <= budget {row['budget']:.3f}")
