"""Periodic grids, discrete Fourier analysis and norms.

Conventions
-----------
The continuous transform is taken without prefactor,
``u_hat(xi) = integral u(x) exp(-i xi.x) dx``, approximated on a grid of
spacing ``h`` by ``h**d * fft(u)``.  Frequencies are ``xi_m = 2 pi m / L``
and the Plancherel weight ``(2 pi)**-d`` lives in the norms, so that
``sum |u|^2 h^d = (2 pi)^-d sum |u_hat|^2 dxi^d``.

With this convention the unit Gaussian has transform ``exp(-|xi|^2 / 2)``
and keeps mass one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "Grid",
    "SampledField",
    "SpectralField",
    "Norms",
    "UnderResolvedScaleError",
    "transform",
    "inverse",
    "convolve",
    "apply_multiplier",
    "norms",
    "bv_seminorm_1d",
    "write_raw",
    "read_raw",
]

RAW_MAGIC = b"H12F"
RAW_HEADER = struct.Struct("<4sB3xI4x")  # 16 bytes, then one f64 for L

SOFT_FLOOR = 4.0
HARD_FLOOR = 2.0


class UnderResolvedScaleError(ValueError):
    """Raised when a kernel scale is too small for the grid spacing."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus ``[0, L)^d``.

    Parameters
    ----------
    dimension : int
        1 or 2.
    period : float
        Side length ``L`` of the torus.
    resolution : int
        Samples per axis ``N``, a power of two, at least 16.
    """

    dimension: int
    period: float
    resolution: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive, got {self.period}")
        n = int(self.resolution)
        if n != self.resolution or n < 16 or n & (n - 1):
            raise ValueError(f"resolution must be a power of two >= 16, got {self.resolution}")
        object.__setattr__(self, "resolution", n)
        object.__setattr__(self, "period", float(self.period))

    @property
    def spacing(self) -> float:
        return self.period / self.resolution

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dimension

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.period

    def coordinates(self, centered: bool = False) -> np.ndarray:
        """1-D sample positions ``j h`` (or pixel centres ``(j + 1/2) h``)."""
        j = np.arange(self.resolution, dtype=float)
        if centered:
            j += 0.5
        return j * self.spacing

    def mesh(self, centered: bool = False) -> tuple[np.ndarray, ...]:
        x = self.coordinates(centered)
        if self.dimension == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij", sparse=True))

    def torus_distance(self) -> np.ndarray:
        """Euclidean norm of the per-axis distance ``min(|x|, L - |x|)`` to the origin."""
        x = self.coordinates()
        t = np.minimum(x, self.period - x)
        if self.dimension == 1:
            return t
        return np.hypot(t[:, None], t[None, :])

    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable angular frequency components on the full FFT layout."""
        k = np.fft.fftfreq(self.resolution, d=self.spacing) * 2.0 * np.pi
        if self.dimension == 1:
            return (k,)
        return (k[:, None], k[None, :])

    def rfrequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency components on the real-FFT layout."""
        kr = np.fft.rfftfreq(self.resolution, d=self.spacing) * 2.0 * np.pi
        if self.dimension == 1:
            return (kr,)
        k = np.fft.fftfreq(self.resolution, d=self.spacing) * 2.0 * np.pi
        return (k[:, None], kr[None, :])

    def rweights(self) -> np.ndarray:
        """Hermitian multiplicity of each real-FFT coefficient along the last axis."""
        m = self.resolution // 2 + 1
        w = np.full(m, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w if self.dimension == 1 else w[None, :]

    def rfreq_norm(self) -> np.ndarray:
        comps = self.rfrequencies()
        if self.dimension == 1:
            return np.abs(comps[0])
        return np.hypot(*comps)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampledField:
    """Real samples of a function on a periodic :class:`Grid`."""

    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != self.grid.shape:
            if s.size == np.prod(self.grid.shape):
                s = s.reshape(self.grid.shape)
            else:
                raise ValueError(f"samples shape {s.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", _readonly(s))

    @cached_property
    def rspectrum(self) -> np.ndarray:
        """Real-FFT coefficients scaled by ``h**d`` (cached)."""
        c = np.fft.rfftn(self.samples) * self.grid.spacing ** self.grid.dimension
        c.setflags(write=False)
        return c

    @cached_property
    def power(self) -> np.ndarray:
        """``|u_hat|^2`` on the real-FFT layout (cached)."""
        p = np.abs(self.rspectrum) ** 2
        p.setflags(write=False)
        return p

    def spectral_sum(self, weight: np.ndarray | float = 1.0) -> float:
        """``(2 pi)^-d sum weight |u_hat|^2 dxi^d`` over all frequencies."""
        g = self.grid
        total = np.sum(g.rweights() * weight * self.power)
        return float(total) / g.period ** g.dimension

    def __add__(self, other: "SampledField") -> "SampledField":
        _check_same_grid(self, other)
        return SampledField(self.grid, self.samples + other.samples)

    def __sub__(self, other: "SampledField") -> "SampledField":
        _check_same_grid(self, other)
        return SampledField(self.grid, self.samples - other.samples)

    def __mul__(self, scalar: float) -> "SampledField":
        return SampledField(self.grid, self.samples * float(scalar))

    __rmul__ = __mul__

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def roll(self, shift: int | tuple[int, ...]) -> "SampledField":
        axes = tuple(range(self.grid.dimension))
        if np.isscalar(shift):
            shift = (int(shift),) * self.grid.dimension
        return SampledField(self.grid, np.roll(self.samples, shift, axis=axes))


def _check_same_grid(a: SampledField, b: SampledField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Transform coefficients ``u_hat(xi_m)`` on the full FFT layout."""

    grid: Grid
    coefficients: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficients shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coefficients", _readonly(c))


def transform(u: SampledField) -> SpectralField:
    """Forward transform ``h**d * fftn(u)``."""
    g = u.grid
    return SpectralField(g, np.fft.fftn(u.samples) * g.spacing ** g.dimension)


def inverse(spec: SpectralField) -> SampledField:
    """Inverse of :func:`transform`; the imaginary part is discarded."""
    g = spec.grid
    vals = np.fft.ifftn(spec.coefficients) / g.spacing ** g.dimension
    return SampledField(g, vals.real)


def check_scale(grid: Grid, r: float, what: str = "scale") -> None:
    """Refuse scales below two grid spacings, warn below four."""
    import warnings

    h = grid.spacing
    if not (r > 0 and np.isfinite(r)):
        raise ValueError(f"{what} must be positive and finite, got {r}")
    if r < HARD_FLOOR * h:
        raise UnderResolvedScaleError(
            f"{what} r={r:.3e} is below {HARD_FLOOR:g}h = {HARD_FLOOR * h:.3e}; the multiplier is aliased"
        )
    if r < SOFT_FLOOR * h * (1 - 1e-12):
        warnings.warn(f"{what} r={r:.3e} is below {SOFT_FLOOR:g}h; accuracy is reduced", stacklevel=3)


def apply_multiplier(u: SampledField, multiplier: np.ndarray) -> SampledField:
    """Multiply the real-FFT coefficients of ``u`` by ``multiplier`` and invert."""
    g = u.grid
    vals = np.fft.irfftn(np.fft.rfftn(u.samples) * multiplier, s=g.shape, axes=tuple(range(g.dimension)))
    return SampledField(g, vals)


def convolve(u: SampledField, kernel, r: float) -> SampledField:
    """Convolve with the kernel scaled to ``r``, as a spectral multiplication.

    The scaled kernel ``f_r(x) = r**-d f(x / r)`` has transform ``f_hat(r xi)``.
    """
    check_scale(u.grid, r)
    return apply_multiplier(u, kernel.on_grid(u.grid, r))


class Norms(NamedTuple):
    l1: float
    l2_sq: float
    linf: float
    h_half_sq: float


def norms(u: SampledField) -> Norms:
    """L1, squared L2, sup and squared H^(1/2) norms of a field."""
    g = u.grid
    cell = g.spacing ** g.dimension
    a = np.abs(u.samples)
    return Norms(
        l1=float(a.sum() * cell),
        l2_sq=u.spectral_sum(1.0),
        linf=float(a.max()) if a.size else 0.0,
        h_half_sq=u.spectral_sum(g.rfreq_norm()),
    )


def bv_seminorm_1d(u: SampledField) -> float:
    """Periodic discrete total variation ``sum |u[i+1] - u[i]|``."""
    if u.grid.dimension != 1:
        raise NotImplementedError("discrete BV is only provided in one dimension")
    s = u.samples
    return float(np.sum(np.abs(np.diff(s, append=s[:1]))))


def write_raw(path: str | Path, u: SampledField) -> None:
    """Write a field in the little-endian ``H12F`` raw format."""
    g = u.grid
    header = RAW_HEADER.pack(RAW_MAGIC, g.dimension, g.resolution) + struct.pack("<d", g.period)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.samples, dtype="<f8").tobytes())


def read_raw(path: str | Path) -> SampledField:
    """Read a field written by :func:`write_raw`."""
    data = Path(path).read_bytes()
    n_head = RAW_HEADER.size + 8
    if len(data) < n_head:
        raise ValueError("file too short for an H12F header")
    magic, dim, n = RAW_HEADER.unpack_from(data, 0)
    if magic != RAW_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    (period,) = struct.unpack_from("<d", data, RAW_HEADER.size)
    grid = Grid(dim, period, n)
    count = n**dim
    body = np.frombuffer(data, dtype="<f8", offset=n_head)
    if body.size != count:
        raise ValueError(f"expected {count} samples, found {body.size}")
    return SampledField(grid, body.reshape(grid.shape))
