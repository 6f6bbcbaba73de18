"""Analytic convolution kernels given by their Fourier multipliers.

Three families are provided:

``gaussian``
    ``exp(-|xi|^2 / 2)``, the unit-mass mollifier.
``phi_bandpass``
    the mean-zero band-pass kernel with
    ``phi_hat(xi)^2 = |xi| (exp(-|xi|^2) - exp(-4 |xi|^2))``.  Its dyadic
    dilates telescope the ``|xi|``-weighted norm of a Gaussian smoothing.
``psi_bandlimited``
    equal to 1 for ``|xi| <= 1/2`` and 0 for ``|xi| >= 1`` with a
    C-infinity monotone transition in between.

A ``custom`` kind accepts an even radial multiplier given as a callable;
it exists mainly so tests can exercise kernels with other closed forms.
An optional ``stretch`` makes any kernel anisotropic: the multiplier
becomes ``m(|A xi|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from .field import Grid, SampledField

__all__ = [
    "KernelSpec",
    "MomentReport",
    "gaussian",
    "phi_bandpass",
    "psi_bandlimited",
    "smooth_step",
    "multiplier",
    "space_samples",
    "moment_report",
    "marginal",
    "domination_constant",
    "LINE_GRID",
    "PHI_HALFSPACE_DENSITY",
]

KINDS = ("gaussian", "phi_bandpass", "psi_bandlimited", "custom")

#: default line used for 1-D marginals: period 4096, spacing 1/64
LINE_GRID = Grid(1, 4096.0, 2**18)

#: closed-form density of the isotropic band-pass kernel, ln 2 / pi
PHI_HALFSPACE_DENSITY = float(np.log(2.0) / np.pi)


def smooth_step(tau, sharpness: float = 1.0) -> np.ndarray:
    """C-infinity step ``f(t) / (f(t) + f(1 - t))`` with ``f(t) = exp(-s / t)``.

    Equal to 0 for ``t <= 0`` and 1 for ``t >= 1``, and symmetric:
    ``B(1 - t) = 1 - B(t)``.
    """
    t = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    out = np.zeros_like(t)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    # ratio f(1-t)/f(t) = exp(s/t - s/(1-t)); clip the exponent to avoid overflow
    expo = np.clip(sharpness * (1.0 / tm - 1.0 / (1.0 - tm)), -700.0, 700.0)
    out[mid] = 1.0 / (1.0 + np.exp(expo))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelSpec:
    """Descriptor of a kernel through its Fourier multiplier.

    Attributes
    ----------
    kind : str
        One of ``gaussian``, ``phi_bandpass``, ``psi_bandlimited``, ``custom``.
    dimension : int
        1 or 2.
    amplitude : float
        Overall factor applied to the multiplier.
    stretch : float or tuple or None
        Scalar (1-D) or 2x2 matrix ``A`` (row-major tuple of tuples); the
        multiplier is evaluated at ``|A xi|``.
    inner, outer : float
        Plateau and support radii of the band-limited kernel.
    sharpness : float
        Steepness of the band-limited transition.
    profile : callable or None
        Radial multiplier ``m(rho)`` for the ``custom`` kind.
    """

    kind: str
    dimension: int = 1
    amplitude: float = 1.0
    stretch: object = None
    inner: float = 0.5
    outer: float = 1.0
    sharpness: float = 1.0
    profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.kind == "custom" and self.profile is None:
            raise ValueError("custom kernels need a radial profile callable")
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")
        if self.stretch is not None:
            a = np.asarray(self.stretch, dtype=float)
            want = () if self.dimension == 1 else (2, 2)
            if a.shape != want:
                raise ValueError(f"stretch must have shape {want}, got {a.shape}")
            object.__setattr__(self, "stretch", a.tolist() if a.ndim else float(a))

    @property
    def is_radial(self) -> bool:
        return self.stretch is None

    @property
    def mass(self) -> float:
        """Integral of the kernel, that is the multiplier at zero."""
        return float(self.amplitude * self.radial(np.zeros(1))[0])

    @property
    def mean_zero(self) -> bool:
        return abs(self.mass) < 1e-14

    def scaled(self, factor: float) -> "KernelSpec":
        return replace(self, amplitude=self.amplitude * factor)

    def with_dimension(self, dimension: int) -> "KernelSpec":
        return replace(self, dimension=dimension, stretch=None if dimension != self.dimension else self.stretch)

    def radial(self, rho: np.ndarray) -> np.ndarray:
        """Unscaled radial profile ``m(rho)`` for ``rho >= 0``."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * rho**2)
        if self.kind == "phi_bandpass":
            r2 = rho**2
            # -expm1 keeps relative accuracy near rho = 0
            val = rho * np.exp(-r2) * (-np.expm1(-3.0 * r2))
            return np.sqrt(np.maximum(val, 0.0))
        if self.kind == "psi_bandlimited":
            tau = (rho - self.inner) / (self.outer - self.inner)
            return 1.0 - smooth_step(tau, self.sharpness)
        return np.asarray(self.profile(rho), dtype=float)

    def stretched_norm(self, comps) -> np.ndarray:
        """``|A xi|`` for broadcastable frequency components."""
        if self.dimension == 1:
            (x,) = comps
            s = 1.0 if self.stretch is None else self.stretch
            return np.abs(s * x)
        x, y = comps
        if self.stretch is None:
            return np.hypot(x, y)
        (a, b), (c, d) = self.stretch
        return np.hypot(a * x + b * y, c * x + d * y)

    def values(self, comps, r: float = 1.0) -> np.ndarray:
        """Multiplier of the kernel dilated to scale ``r`` at the given frequencies."""
        comps = tuple(r * np.asarray(c, dtype=float) for c in comps)
        return self.amplitude * self.radial(self.stretched_norm(comps))

    def on_grid(self, grid: Grid, r: float = 1.0) -> np.ndarray:
        """Multiplier at ``r xi`` on the real-FFT layout of ``grid``."""
        if grid.dimension != self.dimension:
            raise ValueError(f"kernel is {self.dimension}-D but grid is {grid.dimension}-D")
        return self.values(grid.rfrequencies(), r)


def gaussian(dimension: int = 1) -> KernelSpec:
    return KernelSpec("gaussian", dimension)


def phi_bandpass(dimension: int = 1, stretch=None) -> KernelSpec:
    return KernelSpec("phi_bandpass", dimension, stretch=stretch)


def psi_bandlimited(dimension: int = 1, sharpness: float = 1.0) -> KernelSpec:
    return KernelSpec("psi_bandlimited", dimension, sharpness=sharpness)


def multiplier(kernel: KernelSpec, xi) -> np.ndarray | float:
    """Evaluate the multiplier at frequency vectors ``xi``.

    ``xi`` is a scalar or array for 1-D kernels, and an array whose last
    axis has length 2 for 2-D kernels.
    """
    xi = np.asarray(xi, dtype=float)
    if kernel.dimension == 1:
        out = kernel.values((xi,))
    else:
        if xi.shape[-1] != 2:
            raise ValueError("2-D frequencies need a trailing axis of length 2")
        out = kernel.values((xi[..., 0], xi[..., 1]))
    return float(out) if np.ndim(out) == 0 else out


def space_samples(kernel: KernelSpec, grid: Grid) -> SampledField:
    """Periodized real-space kernel on ``grid``, with the origin at index 0."""
    m = kernel.on_grid(grid)
    vals = np.fft.irfftn(m, s=grid.shape, axes=tuple(range(grid.dimension))) / grid.spacing**grid.dimension
    return SampledField(grid, vals)


class MomentReport(NamedTuple):
    mass: float
    abs_first_moment: float
    l1: float


def moment_report(kernel: KernelSpec, grid: Grid) -> MomentReport:
    """Mass, absolute first moment and L1 norm of the sampled kernel."""
    f = space_samples(kernel, grid).samples
    cell = grid.spacing**grid.dimension
    return MomentReport(
        mass=float(f.sum() * cell),
        abs_first_moment=float(np.sum(grid.torus_distance() * np.abs(f)) * cell),
        l1=float(np.abs(f).sum() * cell),
    )


def marginal(kernel: KernelSpec, nu, line: Grid = LINE_GRID) -> SampledField:
    """Integral of the kernel over lines orthogonal to ``nu``.

    By the projection-slice identity its 1-D transform is
    ``eta -> m(eta nu)``.  The result is sampled on ``line`` with the
    origin at index 0.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if nu.shape != (kernel.dimension,):
        raise ValueError(f"normal must have {kernel.dimension} components")
    if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
        raise ValueError("normal must be a unit vector")
    (eta,) = line.rfrequencies()
    m = kernel.values(tuple(eta * c for c in nu))
    peak = float(np.max(np.abs(m)))
    if peak > 0 and abs(m[-1]) > 1e-12 * peak:
        raise ValueError(
            f"marginal under-resolved: multiplier at the line Nyquist frequency is {abs(m[-1]) / peak:.2e} of its peak"
        )
    vals = np.fft.irfft(m, n=line.resolution) / line.spacing
    return SampledField(line, vals)


def domination_constant(phi: KernelSpec | None = None, psi: KernelSpec | None = None, samples: int = 4001) -> float:
    """Supremum of ``|psi_hat(xi) - psi_hat(2 xi)|^2 / phi_hat(xi)^2``.

    The numerator is supported on ``outer/4 <= |xi| <= outer``, where the
    band-pass multiplier is bounded away from zero, so the ratio is finite.
    The maximum is located on a dense radial grid and polished with a
    bounded scalar optimizer.
    """
    phi = phi or phi_bandpass()
    psi = psi or psi_bandlimited()
    lo, hi = psi.inner / 2.0, psi.outer

    def ratio(rho):
        rho = np.asarray(rho, dtype=float)
        d = psi.radial(rho) - psi.radial(2.0 * rho)
        return (psi.amplitude * d) ** 2 / (phi.amplitude * phi.radial(rho)) ** 2

    rho = np.linspace(lo, hi, samples)
    vals = ratio(rho)
    j = int(np.argmax(vals))
    a, b = rho[max(j - 1, 0)], rho[min(j + 1, samples - 1)]
    res = optimize.minimize_scalar(lambda t: -float(ratio(np.array([t]))[0]), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    return float(max(vals[j], -res.fun))
