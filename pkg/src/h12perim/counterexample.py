"""Iterative construction of a set whose smoothed energy collapses along scales.

A stage ``phi_k`` is a function on ``[0, 1]`` described exactly by cells.
Each cell carries one of a few closed-form profiles, or is a restriction
(copy) of the previous stage.  Antiderivatives are available in closed
form up to a tabulated integral of the smooth step, so rasters are exact
pixel averages at any resolution and the level sets ``{phi = 0}``,
``{phi = 1}`` are tracked as exact unions of closed intervals.

The refinement step splits ``[0, 1]`` into ``N'`` equal cells and keeps
every cell average (cells inside ``{phi = 1}`` become 1, cells inside
``{phi = 0}`` become 0, cells touching a level-set boundary or whose
average exceeds ``1 - 1.5 t_floor`` are copied, the rest receive an
average-matching profile that is 0 or 1 on at least a tenth of the cell).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .field import Grid, SampledField, apply_multiplier
from .functionals import smoothed_h12_energy
from .kernels import smooth_step
from .shapes import Intervals

__all__ = [
    "InfeasibleError",
    "ZERO",
    "ONE",
    "RISE",
    "FALL",
    "PLATEAU",
    "BUMP",
    "COPY",
    "step_integral",
    "plateau_mass",
    "RampProfile",
    "ramp_profile",
    "CompatibleState",
    "initial_state",
    "box_raster",
    "refine",
    "select_refinement_N",
    "select_epsilon",
    "compatibility_report",
    "SequenceResult",
    "build_sequence",
    "LimitSet",
    "limit_set",
    "telescoping_report",
]

ZERO, ONE, RISE, FALL, PLATEAU, BUMP, COPY = range(7)
KIND_NAMES = ("zero", "one", "rise", "fall", "plateau", "bump", "copy")

#: plateau width of the rescaled low-average profile
BUMP_T = 0.1
#: absolute tolerance on cell masses when deciding that an average is kept
MASS_TOL = 1e-14
#: smallest plateau parameter used by the refinement before copying instead
DEFAULT_T_FLOOR = 0.1


class InfeasibleError(RuntimeError):
    """A stage cannot be completed within the available resolution."""

    def __init__(self, message: str, stage: int | None = None, constraint: str | None = None):
        self.stage = stage
        self.constraint = constraint
        prefix = f"stage {stage}: " if stage is not None else ""
        super().__init__(prefix + message)


# ---------------------------------------------------------------------------
# closed-form profiles


class _StepTable:
    """Antiderivative of the smooth step on ``[0, 1]``.

    Exact panel integrals are tabulated once; partial panels use
    Gauss-Legendre quadrature, accurate to round-off because the step is
    analytic on each panel.
    """

    def __init__(self, panels: int = 4096, order: int = 8):
        self.panels = panels
        self.nodes, self.weights = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, 1.0, panels + 1)
        a, b = edges[:-1], edges[1:]
        per = self._gauss(a, b)
        self.cum = np.concatenate([[0.0], np.cumsum(per)])

    def _gauss(self, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        x = mid[:, None] + half[:, None] * self.nodes[None, :]
        return half * (smooth_step(x) @ self.weights)

    def __call__(self, tau) -> np.ndarray:
        t = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
        flat = t.ravel()
        j = np.minimum((flat * self.panels).astype(np.int64), self.panels - 1)
        a = j / self.panels
        out = self.cum[j] + self._gauss(a, flat)
        return out.reshape(t.shape)


_TABLE: _StepTable | None = None


def step_integral(tau) -> np.ndarray:
    """``integral_0^tau B(s) ds`` of the smooth step; equals 1/2 at ``tau = 1``."""
    global _TABLE
    if _TABLE is None:
        _TABLE = _StepTable()
    return _TABLE(tau)


def _sigma(s):
    """Ramp on ``[0, 1]``: zero up to 1/2, then the smooth step rescaled to reach 1."""
    return smooth_step(2.0 * np.asarray(s, dtype=float) - 1.0)


def _sigma_int(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * step_integral(2.0 * s - 1.0) + np.maximum(s - 1.0, 0.0)


def _plateau_value(u, t):
    u = np.asarray(u, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), u.shape)
    out = np.ones_like(u)
    lo = u < t
    hi = u > 1.0 - t
    out[lo] = _sigma(u[lo] / t[lo])
    out[hi] = _sigma((1.0 - u[hi]) / t[hi])
    return out


def _plateau_int(u, t):
    """``integral_0^u psi_t`` for ``u`` in ``[0, 1]``."""
    u = np.asarray(u, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), u.shape)
    out = np.empty_like(u)
    lo = u <= t
    hi = u >= 1.0 - t
    mid = ~(lo | hi)
    out[lo] = t[lo] * _sigma_int(u[lo] / t[lo])
    out[mid] = 0.25 * t[mid] + (u[mid] - t[mid])
    th = t[hi]
    out[hi] = 0.25 * th + (1.0 - 2.0 * th) + th * (0.25 - _sigma_int((1.0 - u[hi]) / th))
    return out


def plateau_mass(t: float) -> float:
    """``integral_0^1 psi_t``, evaluated from the antiderivative."""
    return float(_plateau_int(np.array([1.0]), np.array([t]))[0])


def _cell_value(kind, param, u):
    out = np.zeros_like(u)
    for k in (ONE, RISE, FALL, PLATEAU, BUMP):
        m = kind == k
        if not np.any(m):
            continue
        uu = u[m]
        if k == ONE:
            out[m] = 1.0
        elif k == RISE:
            out[m] = smooth_step(uu)
        elif k == FALL:
            out[m] = 1.0 - smooth_step(uu)
        elif k == PLATEAU:
            out[m] = _plateau_value(uu, param[m])
        else:
            out[m] = param[m] * _plateau_value(uu, BUMP_T)
    return out


def _cell_int(kind, param, u):
    """``integral_0^u`` of the unit-cell profile, per point."""
    out = np.zeros_like(u)
    for k in (ONE, RISE, FALL, PLATEAU, BUMP):
        m = kind == k
        if not np.any(m):
            continue
        uu = u[m]
        if k == ONE:
            out[m] = uu
        elif k == RISE:
            out[m] = step_integral(uu)
        elif k == FALL:
            out[m] = uu - step_integral(uu)
        elif k == PLATEAU:
            out[m] = _plateau_int(uu, param[m])
        else:
            out[m] = param[m] * _plateau_int(uu, np.full(uu.shape, BUMP_T))
    return out


def _cell_level_sets(kind: int, param: float):
    """Relative ``(zero, one)`` closed intervals of a unit-cell profile."""
    if kind == ZERO:
        return [(0.0, 1.0)], []
    if kind == ONE:
        return [], [(0.0, 1.0)]
    if kind == RISE:
        return [(0.0, 0.0)], [(1.0, 1.0)]
    if kind == FALL:
        return [(1.0, 1.0)], [(0.0, 0.0)]
    if kind == PLATEAU:
        t = param
        return [(0.0, t / 2), (1 - t / 2, 1.0)], [(t, 1 - t)]
    if kind == BUMP:
        return [(0.0, BUMP_T / 2), (1 - BUMP_T / 2, 1.0)], []
    raise ValueError("copy cells have no intrinsic level sets")


@dataclass(frozen=True)
class RampProfile:
    """Profile on the unit cell with a prescribed integral.

    ``kind`` is ``"zero"``, ``"plateau"`` (``psi_t``) or ``"bump"``
    (``amplitude * psi_0.1``).
    """

    kind: str
    t: float
    amplitude: float
    target: float

    def _code(self):
        return {"zero": ZERO, "plateau": PLATEAU, "bump": BUMP}[self.kind]

    def _param(self):
        return self.t if self.kind == "plateau" else self.amplitude

    def __call__(self, u) -> np.ndarray:
        u = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), 0.0, 1.0)
        return _cell_value(np.full(u.shape, self._code()), np.full(u.shape, self._param()), u)

    def antiderivative(self, u) -> np.ndarray:
        u = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), 0.0, 1.0)
        return _cell_int(np.full(u.shape, self._code()), np.full(u.shape, self._param()), u)

    @property
    def integral(self) -> float:
        return float(self.antiderivative(1.0)[0])

    def level_sets(self):
        """``(zero_set, one_set)`` as lists of closed intervals in ``[0, 1]``."""
        return _cell_level_sets(self._code(), self._param())

    @property
    def decided_measure(self) -> float:
        zero, one = self.level_sets()
        return float(sum(b - a for a, b in zero + one))


def ramp_profile(a: float) -> RampProfile:
    """Smooth profile on ``(0, 1)`` with integral ``a`` and a decided part of measure >= 0.1.

    For ``a > 1/2`` the plateau parameter of ``psi_t`` is found by
    bisection on ``t -> integral psi_t``, which decreases from 1 to 1/4 on
    ``(0, 1/2]``.  For ``0 < a <= 1/2`` the profile is ``psi_0.1`` rescaled,
    whose zero set has measure exactly 0.1.
    """
    a = float(a)
    if not 0.0 <= a < 1.0:
        raise ValueError(f"target average must lie in [0, 1), got {a}")
    if a == 0.0:
        return RampProfile("zero", 0.0, 0.0, a)
    if a <= 0.5:
        return RampProfile("bump", BUMP_T, a / plateau_mass(BUMP_T), a)
    lo = min(BUMP_T, (1.0 - a) / 4.0)
    t = optimize.bisect(lambda s: plateau_mass(s) - a, lo, 0.5, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return RampProfile("plateau", float(t), 1.0, a)


# ---------------------------------------------------------------------------
# interval bookkeeping


def _merge(iv: np.ndarray) -> np.ndarray:
    """Union of closed intervals; touching intervals are joined."""
    if len(iv) == 0:
        return np.zeros((0, 2))
    iv = iv[np.lexsort((iv[:, 1], iv[:, 0]))]
    ends = np.maximum.accumulate(iv[:, 1])
    new = np.ones(len(iv), bool)
    new[1:] = iv[1:, 0] > ends[:-1]
    gid = np.cumsum(new) - 1
    starts = iv[new, 0]
    stops = np.zeros(gid[-1] + 1)
    np.maximum.at(stops, gid, iv[:, 1])
    return np.stack([starts, stops], axis=1)


def _intersect(iv: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Pieces of the sorted disjoint closed intervals ``iv`` inside each closed cell."""
    if len(iv) == 0 or len(cells) == 0:
        return np.zeros((0, 2))
    lo = np.searchsorted(iv[:, 1], cells[:, 0], side="left")
    hi = np.searchsorted(iv[:, 0], cells[:, 1], side="right")
    count = np.maximum(hi - lo, 0)
    if count.sum() == 0:
        return np.zeros((0, 2))
    cell_idx = np.repeat(np.arange(len(cells)), count)
    offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    j = np.repeat(lo, count) + offs
    a = np.maximum(iv[j, 0], cells[cell_idx, 0])
    b = np.minimum(iv[j, 1], cells[cell_idx, 1])
    keep = a <= b
    return np.stack([a[keep], b[keep]], axis=1)


def _contains(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """For each interval of ``inner``, whether one interval of ``outer`` contains it."""
    if len(inner) == 0:
        return np.zeros(0, bool)
    if len(outer) == 0:
        return np.zeros(len(inner), bool)
    j = np.searchsorted(outer[:, 0], inner[:, 0], side="right") - 1
    ok = j >= 0
    jj = np.maximum(j, 0)
    return ok & (outer[jj, 1] >= inner[:, 1])


def _measure(iv: np.ndarray) -> float:
    return float(np.sum(iv[:, 1] - iv[:, 0])) if len(iv) else 0.0


# ---------------------------------------------------------------------------
# stages


@dataclass(frozen=True, eq=False)
class CompatibleState:
    """One stage of the construction.

    Attributes
    ----------
    level : int
        Stage index ``k`` (the first stage is 1).
    edges : ndarray
        Cell boundaries, ``edges[0] = 0`` and ``edges[-1] = 1``.
    kinds, params : ndarray
        Profile code and parameter per cell.
    parent : CompatibleState or None
        Stage restricted by copy cells.
    eps : float or None
        Scale at which the smoothness bound was certified.
    zero_set, one_set : ndarray
        Merged closed intervals where the stage equals 0 and 1.
    certification : dict
        Measurements recorded by the builder.
    """

    level: int
    edges: np.ndarray
    kinds: np.ndarray
    params: np.ndarray
    parent: "CompatibleState | None" = None
    eps: float | None = None
    certification: dict = dc_field(default_factory=dict)
    zero_set: np.ndarray = dc_field(default=None, repr=False)
    one_set: np.ndarray = dc_field(default=None, repr=False)
    masses: np.ndarray = dc_field(default=None, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        k = np.asarray(self.kinds, dtype=np.int8)
        p = np.asarray(self.params, dtype=float)
        if e[0] != 0.0 or e[-1] != 1.0 or np.any(np.diff(e) <= 0):
            raise ValueError("cells must partition [0, 1]")
        if k.shape != (e.size - 1,) or p.shape != k.shape:
            raise ValueError("one kind and one parameter per cell")
        if np.any(k == COPY) and self.parent is None:
            raise ValueError("copy cells need a parent stage")
        for name, arr in (("edges", e), ("kinds", k), ("params", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.masses is None:
            object.__setattr__(self, "masses", self._cell_masses())
        if self.zero_set is None:
            zero, one = self._level_sets()
            object.__setattr__(self, "zero_set", zero)
            object.__setattr__(self, "one_set", one)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        object.__setattr__(self, "_cum", cum)
        copy_base = np.zeros(k.size)
        if self.parent is not None and np.any(k == COPY):
            m = k == COPY
            copy_base[m] = self.parent.antiderivative(e[:-1][m])
        object.__setattr__(self, "_copy_base", copy_base)

    # -- construction helpers
    def _cell_masses(self) -> np.ndarray:
        w = np.diff(self.edges)
        one = np.ones(w.size)
        m = w * _cell_int(self.kinds, self.params, one)
        c = self.kinds == COPY
        if np.any(c):
            P = self.parent.antiderivative
            m[c] = P(self.edges[1:][c]) - P(self.edges[:-1][c])
        return m

    def _level_sets(self):
        e, k, p = self.edges, self.kinds, self.params
        w = np.diff(e)
        zeros, ones = [], []
        for code in (ZERO, ONE, RISE, FALL, PLATEAU, BUMP):
            idx = np.flatnonzero(k == code)
            if idx.size == 0:
                continue
            if code in (PLATEAU, BUMP):
                t = p[idx] if code == PLATEAU else np.full(idx.size, BUMP_T)
                s, ww = e[idx], w[idx]
                zeros += [np.stack([s, s + ww * t / 2], 1), np.stack([s + ww * (1 - t / 2), s + ww], 1)]
                if code == PLATEAU:
                    ones.append(np.stack([s + ww * t, s + ww * (1 - t)], 1))
                continue
            z, o = _cell_level_sets(code, 0.0)
            for rel, acc in ((z, zeros), (o, ones)):
                for a, b in rel:
                    acc.append(np.stack([e[idx] + w[idx] * a, e[idx] + w[idx] * b], 1))
        c = np.flatnonzero(k == COPY)
        if c.size:
            cells = np.stack([e[c], e[c + 1]], 1)
            zeros.append(_intersect(self.parent.zero_set, cells))
            ones.append(_intersect(self.parent.one_set, cells))
        stack = lambda parts: _merge(np.concatenate(parts)) if parts else np.zeros((0, 2))  # noqa: E731
        zero, one = stack(zeros), stack(ones)
        for a in (zero, one):
            a.setflags(write=False)
        return zero, one

    # -- evaluation
    @property
    def cell_count(self) -> int:
        return int(self.kinds.size)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.cell_count - 1)
        return x, idx

    def antiderivative(self, x) -> np.ndarray:
        """``integral_0^x phi_k``."""
        x, idx = self._locate(x)
        w = self.widths[idx]
        u = np.clip((x - self.edges[idx]) / w, 0.0, 1.0)
        part = w * _cell_int(self.kinds[idx], self.params[idx], u)
        c = self.kinds[idx] == COPY
        if np.any(c):
            part[c] = self.parent.antiderivative(x[c]) - self._copy_base[idx[c]]
        return self._cum[idx] + part

    def __call__(self, x) -> np.ndarray:
        """Pointwise values."""
        x, idx = self._locate(x)
        u = np.clip((x - self.edges[idx]) / self.widths[idx], 0.0, 1.0)
        out = _cell_value(self.kinds[idx], self.params[idx], u)
        c = self.kinds[idx] == COPY
        if np.any(c):
            out[c] = self.parent(x[c])
        return out

    # -- level sets
    @property
    def undecided_measure(self) -> float:
        return 1.0 - _measure(self.zero_set) - _measure(self.one_set)

    @property
    def interval_count(self) -> dict:
        return {"zero": int(len(self.zero_set)), "one": int(len(self.one_set))}

    def boundary_points(self) -> np.ndarray:
        """Endpoints of the level-set intervals inside ``(0, 1)``."""
        pts = np.concatenate([self.zero_set.ravel(), self.one_set.ravel()])
        pts = np.unique(pts)
        return pts[(pts > 0.0) & (pts < 1.0)]

    def min_gap(self) -> float:
        p = self.boundary_points()
        return float(np.min(np.diff(p))) if p.size > 1 else 1.0

    def kind_counts(self) -> dict:
        return {KIND_NAMES[i]: int(np.count_nonzero(self.kinds == i)) for i in range(len(KIND_NAMES))}

    def to_dict(self, include_cells: bool = True) -> dict:
        d = {
            "cell_count": self.cell_count,
            "certification": self.certification,
            "eps": self.eps,
            "interval_count": self.interval_count,
            "kind_counts": self.kind_counts(),
            "level": self.level,
            "one_measure": _measure(self.one_set),
            "undecided_measure": self.undecided_measure,
            "zero_measure": _measure(self.zero_set),
        }
        if include_cells:
            d["cells"] = {
                "edges": self.edges.tolist(),
                "kinds": [KIND_NAMES[i] for i in self.kinds],
                "params": self.params.tolist(),
            }
        return d


def initial_state(rise=(0.01, 0.49), fall=(0.51, 0.99)) -> CompatibleState:
    """First stage: 0, smooth rise, plateau 1, smooth fall, 0."""
    a0, a1 = rise
    b1, b0 = fall
    if not 0 < a0 < a1 <= b1 < b0 < 1:
        raise ValueError("need 0 < a0 < a1 <= b1 < b0 < 1")
    if a1 == b1:
        edges = [0.0, a0, a1, b0, 1.0]
        kinds = [ZERO, RISE, FALL, ZERO]
    else:
        edges = [0.0, a0, a1, b1, b0, 1.0]
        kinds = [ZERO, RISE, ONE, FALL, ZERO]
    return CompatibleState(1, np.array(edges), np.array(kinds), np.zeros(len(kinds)))


def box_raster(state: CompatibleState, resolution: int) -> SampledField:
    """Exact pixel averages of a stage on ``resolution`` pixels of ``[0, 1)``."""
    grid = Grid(1, 1.0, resolution)
    x = np.arange(resolution + 1) / resolution
    P = state.antiderivative(x)
    return SampledField(grid, np.diff(P) * resolution)


# ---------------------------------------------------------------------------
# refinement


def _cells_with_points(n: int, pts: np.ndarray) -> np.ndarray:
    """Number of points in each closed cell ``[i/n, (i+1)/n]``."""
    cnt = np.zeros(n, dtype=np.int64)
    if pts.size == 0:
        return cnt
    y = pts * n
    i = np.floor(y).astype(np.int64)
    np.add.at(cnt, np.clip(i, 0, n - 1), 1)
    on_edge = (y == i) & (i > 0)
    np.add.at(cnt, i[on_edge] - 1, 1)
    return cnt


def _separation_ok(state: CompatibleState, n: int) -> bool:
    return bool(np.all(_cells_with_points(n, state.boundary_points()) <= 1))


def refine(state: CompatibleState, n_cells: int, t_floor: float = DEFAULT_T_FLOOR) -> CompatibleState:
    """Refine onto ``n_cells`` equal cells, keeping every cell average.

    The returned stage carries a certification record with the exact
    inclusion checks, the undecided-measure ratio and the average
    mismatch statistics.
    """
    n = int(n_cells)
    if n < 2:
        raise ValueError("need at least two cells")
    edges = np.arange(n + 1, dtype=float) / n
    cells = np.stack([edges[:-1], edges[1:]], 1)
    masses = np.diff(state.antiderivative(edges))
    avg = np.clip(masses * n, 0.0, 1.0)

    touched = _cells_with_points(n, state.boundary_points()) > 0
    if np.any(_cells_with_points(n, state.boundary_points()) > 1):
        raise InfeasibleError(f"cells of width 1/{n} meet more than one level-set boundary point",
                              state.level + 1, "boundary separation")
    in_one = _contains(state.one_set, cells)
    in_zero = _contains(state.zero_set, cells)

    kinds = np.full(n, COPY, dtype=np.int8)
    params = np.zeros(n)
    free = ~touched
    kinds[free & in_one] = ONE
    kinds[free & in_zero] = ZERO
    case2 = free & ~in_one & ~in_zero
    a_max = plateau_mass(t_floor)
    bump = case2 & (avg <= 0.5)
    plat = case2 & (avg > 0.5) & (avg <= a_max)
    kinds[bump] = BUMP
    params[bump] = avg[bump] / plateau_mass(BUMP_T)
    kinds[bump & (params == 0.0)] = ZERO
    kinds[plat] = PLATEAU
    # psi_t integrates to 1 - 3t/2
    params[plat] = (1.0 - avg[plat]) / 1.5

    child = CompatibleState(state.level + 1, edges, kinds, params, parent=state)
    child_masses = child.masses
    mass_gap = np.abs(child_masses - masses)
    # cell masses come from differences of antiderivatives of size <= 1, so
    # agreement is expected to a few hundred ulps of unity, not of the mass
    unmatched = int(np.count_nonzero(mass_gap > MASS_TOL))
    inc_one = bool(np.all(_contains(child.one_set, state.one_set)))
    inc_zero = bool(np.all(_contains(child.zero_set, state.zero_set)))
    before = state.undecided_measure
    ratio = child.undecided_measure / before if before > 0 else 0.0
    cert = {
        "cells": n,
        "inclusion_one": inc_one,
        "inclusion_zero": inc_zero,
        "undecided_ratio": float(ratio),
        "undecided_ratio_ok": bool(ratio <= 0.99),
        "unmatched_cells": unmatched,
        "unmatched_allowed": 2 * state.level,
        "max_mass_mismatch": float(mass_gap.max()),
        "max_average_mismatch": float(mass_gap.max() * n),
        "interval_count": child.interval_count,
        "kind_counts": child.kind_counts(),
    }
    return replace(child, certification={"refinement": cert})


class CompatibilityReport(NamedTuple):
    r: list
    l2: list
    linf: list
    tol: float

    @property
    def worst(self) -> float:
        return max(max(self.l2), max(self.linf))

    @property
    def ok(self) -> bool:
        return self.worst < self.tol

    def to_dict(self) -> dict:
        return {"l2": self.l2, "linf": self.linf, "ok": bool(self.ok), "r": self.r, "tol": self.tol,
                "margin": float(self.tol / self.worst) if self.worst > 0 else None}


def compatibility_report(a: CompatibleState | SampledField, b: CompatibleState | SampledField,
                         scales: Sequence[float], tol: float, resolution: int = 2**20) -> CompatibilityReport:
    """``||gamma_r * (a - b)||`` in L2 and sup norm at each ``r``.

    The difference is taken between exact pixel averages; the Gaussian is
    applied spectrally.
    """
    ua = a if isinstance(a, SampledField) else box_raster(a, resolution)
    ub = b if isinstance(b, SampledField) else box_raster(b, resolution)
    d = ua - ub
    k = d.grid.rfreq_norm()
    l2, linf = [], []
    for r in scales:
        m = np.exp(-0.5 * (r * k) ** 2)
        l2.append(float(np.sqrt(d.spectral_sum(m**2))))
        linf.append(float(np.max(np.abs(apply_multiplier(d, m).samples))))
    return CompatibilityReport([float(r) for r in scales], l2, linf, float(tol))


def _next_power_of_two(x: float) -> int:
    return 1 << max(1, int(np.ceil(np.log2(max(x, 2.0)) - 1e-12)))


def _refinement_search(state, delta, tol, resolution_cap, max_cell=None, t_floor=DEFAULT_T_FLOOR,
                       raster_resolution=None):
    stage = state.level + 1
    floor = 4.0 / resolution_cap
    if delta < floor:
        raise InfeasibleError(f"scale {delta:.3e} is below the grid floor 4h = {floor:.3e}", stage, "grid floor")
    raster_resolution = raster_resolution or resolution_cap
    n_prev = state.cell_count if np.allclose(state.widths, state.widths[0]) else 1
    gap = state.min_gap()
    need = {"refinement": 2 * n_prev, "boundary separation": 1.0 / gap}
    if max_cell is not None:
        need["lookahead scale"] = 1.0 / max_cell
    binding = max(need, key=need.get)
    n = _next_power_of_two(need[binding])
    while not _separation_ok(state, n):
        n *= 2
        binding = "boundary separation"
    scales = [delta * 2.0**j for j in range(4)]
    base = box_raster(state, raster_resolution)
    tried = []
    while n <= resolution_cap:
        child = refine(state, n, t_floor)
        rep = compatibility_report(base, child, scales, tol, raster_resolution)
        tried.append((n, rep.worst))
        if rep.ok:
            return n, child, rep, {"binding": binding, "tried": tried, "min_gap": gap}
        n *= 2
        binding = "compatibility"
    raise InfeasibleError(
        f"no refinement up to the resolution cap 2^{int(np.log2(resolution_cap))} meets the required bound "
        f"(binding constraint: {binding}; needed N' >= {_next_power_of_two(max(need.values()))}; tried {tried})",
        stage, binding)


def select_refinement_N(state: CompatibleState, delta: float, tol: float, resolution_cap: int = 2**22,
                        max_cell: float | None = None, t_floor: float = DEFAULT_T_FLOOR) -> int:
    """Smallest dyadic ``N'`` whose refinement is certified at ``r in {d, 2d, 4d, 8d}``.

    Requirements checked, in order: ``N'`` at least twice the current cell
    count, every closed cell meets at most one level-set boundary point,
    cells no wider than ``max_cell``, and the measured L2 and sup norms of
    ``gamma_r * (phi - psi)`` below ``tol``.
    """
    if tol <= 0 or delta <= 0:
        raise ValueError("tol and delta must be positive")
    n, *_ = _refinement_search(state, delta, tol, resolution_cap, max_cell, t_floor)
    return n


def select_epsilon(state: CompatibleState | SampledField, threshold: float, resolution: int = 2**22,
                   start: float = 0.125, below: float | None = None):
    """Largest dyadic ``eps`` with ``|log eps|^-1 ||gamma_eps * phi||^2_{H^(1/2)} < threshold``.

    The scan starts at ``start`` (or just below ``below``) and halves down
    to ``4h``.  Returns ``(eps, energy)``.
    """
    u = state if isinstance(state, SampledField) else box_raster(state, resolution)
    stage = None if isinstance(state, SampledField) else state.level
    floor = 4.0 * u.grid.spacing
    eps = start
    if below is not None:
        while eps >= below:
            eps /= 2.0
    seen = []
    while eps >= floor * (1 - 1e-12):
        e = smoothed_h12_energy(u, eps)
        seen.append((eps, e))
        if e < threshold:
            return float(eps), float(e)
        eps /= 2.0
    best = min(seen, key=lambda p: p[1]) if seen else None
    raise InfeasibleError(
        f"resolution floor 4h = {floor:.3e} reached before the energy fell below {threshold:.4g}"
        + (f" (lowest normalized energy {best[1]:.4g} at eps = {best[0]:.3e})" if best else ""),
        stage, "resolution floor")


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class SequenceResult:
    states: list
    eps: list
    energies: list
    thresholds: list
    compatibility: list
    plan: list
    timings: dict

    def summary(self) -> dict:
        return {
            "depth": len(self.states),
            "eps": self.eps,
            "energies": self.energies,
            "thresholds": self.thresholds,
            "plan": self.plan,
            "compatibility": [c.to_dict() for c in self.compatibility],
            "stages": [s.to_dict(include_cells=False) for s in self.states],
            "all_certified": self.all_certified,
            "timings": self.timings,
        }

    @property
    def all_certified(self) -> bool:
        return all(s.certification.get("ok", False) for s in self.states)


def _plan_scales(u: SampledField, thresholds, start: float):
    """Scales at which the first stage alone meets each threshold."""
    floor = 4.0 * u.grid.spacing
    plan, eps = [], start
    for k, thr in enumerate(thresholds, start=1):
        while eps >= floor * (1 - 1e-12) and smoothed_h12_energy(u, eps) >= thr:
            eps /= 2.0
        if eps < floor * (1 - 1e-12):
            e_floor = smoothed_h12_energy(u, floor)
            raise InfeasibleError(
                f"the first stage needs a scale below the resolution floor 4h = {floor:.3e} to reach "
                f"threshold {thr:.4g} (normalized energy at the floor: {e_floor:.4g}); "
                f"planned scales so far {plan}", k, "resolution floor")
        plan.append(eps)
        eps /= 2.0
    return plan


def _certify_stage(state: CompatibleState, eps: float, energy: float, threshold: float) -> CompatibleState:
    k = state.level
    cert = dict(state.certification)
    bound = 0.99**k
    smooth = {"eps": float(eps), "energy": float(energy), "threshold": float(threshold),
              "ok": bool(energy < threshold)}
    decided = {"undecided_measure": float(state.undecided_measure), "bound": bound,
               "ok": bool(state.undecided_measure < bound)}
    ref = cert.get("refinement")
    inclusions = True if ref is None else (ref["inclusion_one"] and ref["inclusion_zero"])
    averages = True if ref is None else ref["unmatched_cells"] <= ref["unmatched_allowed"]
    ratio_ok = True if ref is None else ref["undecided_ratio_ok"]
    nontrivial = k > 1 or _measure(state.one_set) > 0
    cert.update(smoothness=smooth, undecided=decided, inclusions=inclusions, averages=averages,
                nontrivial=nontrivial)
    cert["ok"] = bool(smooth["ok"] and decided["ok"] and inclusions and averages and ratio_ok and nontrivial
                      and cert.get("compatibility_ok", True))
    return replace(state, eps=eps, certification=cert)


def build_sequence(depth: int, thresholds: Sequence[float] | None = None, resolution_cap: int = 2**22,
                   first_stage: CompatibleState | None = None, eps_start: float = 0.125,
                   cell_margin: float = 8.0, t_floor: float = DEFAULT_T_FLOOR, log=None) -> SequenceResult:
    """Build and certify ``depth`` stages.

    ``thresholds[k-1]`` bounds the normalized energy of stage ``k`` at its
    scale (default ``2^-k``).  Stage ``k + 1`` refines stage ``k`` with the
    compatibility tolerance ``eps_k^3 2^-k`` checked at
    ``r in {eps_k, 2 eps_k, 4 eps_k, 8 eps_k}``.  Cell widths are capped by
    ``eps_depth / cell_margin`` using scales planned from the first stage,
    so that refinements stay invisible at every later scale.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    thresholds = list(thresholds) if thresholds is not None else [2.0**-k for k in range(1, depth + 1)]
    if len(thresholds) < depth:
        raise ValueError("need one threshold per stage")
    say = log or (lambda msg: None)
    t0 = time.perf_counter()
    state = first_stage or initial_state()
    u1 = box_raster(state, resolution_cap)
    plan = _plan_scales(u1, thresholds[:depth], eps_start)
    max_cell = plan[-1] / cell_margin
    timings = {"plan": time.perf_counter() - t0}
    say(f"planned scales {plan}; cell width cap {max_cell:.3e}")

    eps, energy = select_epsilon(u1, thresholds[0], start=eps_start)
    state = _certify_stage(state, eps, energy, thresholds[0])
    states, eps_list, energies, compat = [state], [eps], [energy], []
    say(f"stage 1: eps = {eps:.3e}, energy = {energy:.4f}")
    for k in range(1, depth):
        t1 = time.perf_counter()
        tol = eps**3 * 2.0**-k
        n, child, rep, info = _refinement_search(state, eps, tol, resolution_cap, max_cell, t_floor)
        compat.append(rep)
        cert = {**state.certification, "compatibility_next": rep.to_dict(), "compatibility_ok": rep.ok,
                "refinement_choice": {"cells": n, **info}}
        cert["ok"] = bool(cert["ok"] and rep.ok)
        prev = replace(state, certification=cert)
        states[-1] = prev
        child = replace(child, parent=prev)
        e_next, en_next = select_epsilon(child, thresholds[k], resolution=resolution_cap, below=eps)
        child = _certify_stage(child, e_next, en_next, thresholds[k])
        states.append(child)
        state, eps = child, e_next
        eps_list.append(eps)
        energies.append(en_next)
        timings[f"stage {k + 1}"] = time.perf_counter() - t1
        say(f"stage {k + 1}: N' = {n}, eps = {eps:.3e}, energy = {en_next:.4f}, "
            f"compatibility {rep.worst:.2e} < {tol:.2e}")
    timings["total"] = time.perf_counter() - t0
    return SequenceResult(states, eps_list, energies, thresholds[:depth], compat, plan, timings)


# ---------------------------------------------------------------------------
# the limiting set


class LimitSet(NamedTuple):
    shape: Intervals
    lower: float
    upper: float
    error_bar: float


def limit_set(states: Sequence[CompatibleState]) -> LimitSet:
    """``{phi_K = 1}`` of the deepest stage with the undecided measure as error bar."""
    if not states:
        raise ValueError("need at least one stage")
    s = states[-1]
    one = s.one_set[s.one_set[:, 1] > s.one_set[:, 0]]
    shape = Intervals(one) if len(one) else Intervals(np.zeros((0, 2)))
    lo = _measure(one)
    return LimitSet(shape, lo, lo + s.undecided_measure, s.undecided_measure)


def telescoping_report(states: Sequence[CompatibleState], resolution: int = 2**20) -> list[dict]:
    """Compare the energy of the limit-set raster with each stage along its scale.

    For each stage ``k`` the H^(1/2) distance between ``gamma * 1_E`` and
    ``gamma * phi_k`` at ``eps_k`` is bounded by the sum over later stages
    of ``sqrt(||v||_2 ||v||_{H^1})`` with ``v = gamma * (phi_m - phi_{m+1})``
    plus the last-stage gap, an interpolation inequality evaluated term by
    term.
    """
    from .shapes import rasterize

    rasters = [box_raster(s, resolution) for s in states]
    E = rasterize(limit_set(states).shape, rasters[0].grid)
    k_norm = rasters[0].grid.rfreq_norm()
    out = []
    for k, s in enumerate(states):
        eps = s.eps
        g2 = np.exp(-(eps * k_norm) ** 2)

        def h_half(f):
            return np.sqrt(f.spectral_sum(k_norm * g2))

        budget = 0.0
        for m in range(k, len(states) - 1):
            v = rasters[m] - rasters[m + 1]
            budget += np.sqrt(np.sqrt(v.spectral_sum(g2) * v.spectral_sum(k_norm**2 * g2)))
        budget += h_half(E - rasters[-1])
        gap = abs(h_half(E) - h_half(rasters[k]))
        out.append({"level": s.level, "eps": eps, "gap": float(gap), "budget": float(budget),
                    "ok": bool(gap <= budget * (1 + 1e-9) + 1e-12),
                    "energy_limit_set": float(smoothed_h12_energy(E, eps)),
                    "energy_stage": float(smoothed_h12_energy(rasters[k], eps))})
    return out


def dump_stages(result: SequenceResult, directory) -> list:
    """Write one JSON file per stage plus a summary; return the paths."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in result.states:
        p = d / f"stage_{s.level:02d}.json"
        p.write_text(json.dumps(s.to_dict(include_cells=s.cell_count <= 200000), sort_keys=True, indent=1) + "\n",
                     encoding="utf-8")
        paths.append(p)
    p = d / "summary.json"
    p.write_text(json.dumps(result.summary(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    paths.append(p)
    return paths
