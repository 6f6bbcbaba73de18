"""Scale-localized H^1/2 energies of indicator functions on periodic grids.

Submodules:

* ``field``: grids, sampled fields, spectral transforms and norms
* ``kernels``: Gaussian, band-pass and band-limited kernels
* ``shapes``: intervals, polygons, balls, subgraphs, bitmaps
* ``functionals``: smoothed energies, dyadic decompositions, scale scans
* ``density``: the interface density ``F(nu)`` and boundary integrals
* ``counterexample``: compatible sequences with collapsing smoothed energy
* ``diagnostic``: band-limited defect and the delta-cube census
* ``experiments`` / ``cli``: reproducible recipes and the ``h12`` tool
"""

from .field import Grid, SampledField, UnderResolvedScaleError, norms, read_raw, write_raw
from .kernels import KernelSpec, gaussian, phi_bandpass, psi_bandlimited
from .density import F_via_halfspace, F_via_marginal, boundary_integral, c_f
from .functionals import dyadic_decomposition, scale_localized_l2, scale_scan, smoothed_h12_energy

__all__ = [
    "Grid", "SampledField", "UnderResolvedScaleError", "norms", "read_raw", "write_raw",
    "KernelSpec", "gaussian", "phi_bandpass", "psi_bandlimited",
    "F_via_halfspace", "F_via_marginal", "boundary_integral", "c_f",
    "dyadic_decomposition", "scale_localized_l2", "scale_scan", "smoothed_h12_energy",
]

__version__ = "0.1.0"
