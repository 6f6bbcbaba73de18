"""Interface density of the band-pass kernel.

Computes F(nu) by both quadratures, compares with ln 2 / pi, and shows how
a stretched kernel picks up the factor |A nu|.
"""

import numpy as np

from h12perim import density, kernels

phi1 = kernels.phi_bandpass(1)
a = density.F_via_marginal(phi1)
b = density.F_via_halfspace(phi1)
print(f"c_f, marginal route : {a:.10f}")
print(f"c_f, half-space     : {b:.10f}")
print(f"ln 2 / pi           : {np.log(2) / np.pi:.10f}")

A = np.array([[1.5, 0.3], [0.0, 0.8]])
st = kernels.phi_bandpass(2, stretch=A)
print("\nstretched kernel, F(nu) / (|A nu| c_f):")
for t in np.linspace(0, np.pi, 5):
    nu = np.array([np.cos(t), np.sin(t)])
    f = density.F_via_marginal(st, nu)
    print(f"  theta = {t:5.3f}   F = {f:.6f}   ratio = {f / (np.linalg.norm(A @ nu) * a):.7f}")
