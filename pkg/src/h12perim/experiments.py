"""Reproducible experiment recipes behind the ``h12`` command line tool.

An :class:`ExperimentConfig` fully determines an experiment.  Running it
produces named artifacts (CSV tables and JSON records) whose file names
and contents carry a short hash of the canonical config, plus a list of
checks.  The exit status is 0 when every check passes and 1 otherwise, in
which case a machine-readable failure record is written next to the
artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from . import counterexample as cx
from . import density, diagnostic, functionals as fn, kernels, shapes
from .field import Grid, SampledField, bv_seminorm_1d, read_raw

__all__ = ["ConfigError", "ExperimentConfig", "Outcome", "EXPERIMENTS", "execute", "run"]


class ConfigError(ValueError):
    """Invalid experiment configuration (usage error)."""


@dataclass
class ExperimentConfig:
    experiment: str
    dimension: int = 1
    period: float = 1.0
    resolution: int = 2**14
    shape: dict | None = None
    input: str | None = None
    kernel: str = "phi_bandpass"
    schedule: list | None = None
    output: str = "h12_out"
    seed: int = 0
    params: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical(self) -> str:
        d = self.to_dict()
        d.pop("output")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' name")
        return cls(**d)

    def grid(self) -> Grid:
        try:
            return Grid(self.dimension, self.period, self.resolution)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def check_schedule(self) -> list:
        if not self.schedule:
            raise ConfigError("experiment needs a scale schedule")
        s = [float(x) for x in self.schedule]
        floor = 4 * self.period / self.resolution
        if min(s) < floor * (1 - 1e-12):
            raise ConfigError(f"scale {min(s):.3e} is below the 4h floor {floor:.3e}")
        return s


@dataclass
class Outcome:
    artifacts: dict = dc_field(default_factory=dict)
    checks: list = dc_field(default_factory=list)
    summary: dict = dc_field(default_factory=dict)

    def check(self, name: str, ok: bool, **detail) -> None:
        self.checks.append({"name": name, "ok": bool(ok), **{k: _jsonable(v) for k, v in detail.items()}})

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _kernel(cfg: ExperimentConfig) -> kernels.KernelSpec:
    name = {"phi": "phi_bandpass", "psi": "psi_bandlimited"}.get(cfg.kernel, cfg.kernel)
    try:
        return kernels.KernelSpec(name, cfg.dimension)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _field(cfg: ExperimentConfig) -> tuple[SampledField, object]:
    if cfg.input:
        u = read_raw(cfg.input)
        return u, None
    if cfg.shape is None:
        raise ConfigError("experiment needs a shape or an input field")
    try:
        shape = shapes.shape_from_dict(cfg.shape)
        return shapes.rasterize(shape, cfg.grid()), shape
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad shape: {exc}") from exc


# --------------------------------------------------------------------------- experiments


def exp_energy(cfg: ExperimentConfig) -> Outcome:
    u, _ = _field(cfg)
    sched = cfg.check_schedule()
    trace = fn.scale_scan(u, "energy", sched, meta={"config_hash": cfg.hash})
    out = Outcome()
    out.artifacts["trace.csv"] = trace.to_csv()
    out.artifacts["trace.json"] = trace.to_dict()
    out.summary = {"limit_estimate": trace.limit_estimate, "beta": trace.beta}
    out.check("values nonnegative", bool(np.all(trace.values >= 0)))
    return out


def exp_decompose(cfg: ExperimentConfig) -> Outcome:
    u, _ = _field(cfg)
    (eps,) = cfg.check_schedule()[:1]
    dec = fn.dyadic_decomposition(u, eps, kernel=kernels.phi_bandpass(u.grid.dimension))
    out = Outcome()
    out.artifacts["terms.csv"] = _csv(["k", "scale", "term", "partial_sum"],
                                      [(k, s, t, p) for k, (s, t, p) in
                                       enumerate(zip(dec.scales, dec.terms, dec.partial_sums))])
    rec = {"eps": eps, "h_half": dec.h_half, "total": dec.total, "remainder": dec.remainder,
           "remainder_constant": dec.remainder_constant, "identity_error": dec.identity_error()}
    out.artifacts["decomposition.json"] = rec
    out.summary = rec
    out.check("telescoping identity", dec.identity_error() <= 1e-10, error=dec.identity_error())
    return out


def _localized_oracle(cfg: ExperimentConfig, shape, kern):
    if shape is None:
        return None
    try:
        return density.boundary_integral(shape, kern)
    except NotImplementedError:
        if isinstance(shape, shapes.Intervals):
            return density.c_f() * shapes.perimeter(shape)
    return None


def exp_scan(cfg: ExperimentConfig) -> Outcome:
    u, shape = _field(cfg)
    kern = _kernel(cfg)
    sched = cfg.check_schedule()
    trace = fn.scale_scan(u, "localized", sched, kernel=kern, meta={"config_hash": cfg.hash})
    out = Outcome()
    out.artifacts["trace.csv"] = trace.to_csv()
    rec = trace.to_dict()
    oracle = _localized_oracle(cfg, shape, kern)
    rec["oracle"] = oracle
    out.artifacts["trace.json"] = rec
    out.summary = {"limit_estimate": trace.limit_estimate, "oracle": oracle}
    if oracle is not None:
        tol = float(cfg.params.get("rel_tol", 0.05))
        err = abs(trace.limit_estimate - oracle) / oracle
        out.check("limit matches boundary integral", err <= tol, rel_error=err, tol=tol)
    return out


def exp_jump1d(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    try:
        pc = fn.PiecewiseConstant1D(p.get("breakpoints", [0.5]), p.get("values", [0.0, 1.0]), cfg.period,
                                    p.get("closure", "ramp"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = cfg.grid()
    sched = cfg.check_schedule()
    cf = density.c_f()
    expected = fn.jump_functional_1d(pc, cf)
    trace = fn.scale_scan(pc.raster(grid), "localized", sched, meta={"config_hash": cfg.hash})
    out = Outcome()
    out.artifacts["trace.csv"] = trace.to_csv()
    rec = {**trace.to_dict(), "c_f": cf, "jump_functional": expected, "jumps": pc.jumps(),
           "bv": bv_seminorm_1d(pc.raster(grid))}
    out.artifacts["jump1d.json"] = rec
    tol = float(p.get("rel_tol", 0.03))
    err = abs(trace.limit_estimate - expected) / expected if expected > 0 else abs(trace.limit_estimate)
    out.summary = {"limit_estimate": trace.limit_estimate, "jump_functional": expected}
    out.check("limit matches c_f sum J^2", err <= tol, rel_error=err, tol=tol)
    return out


def exp_fnu(cfg: ExperimentConfig) -> Outcome:
    kern = _kernel(cfg)
    count = int(cfg.params.get("normals", 8))
    rng = np.random.default_rng(cfg.seed)
    if kern.dimension == 1:
        normals = [np.array([1.0]), np.array([-1.0])]
    else:
        th = np.pi * np.arange(count) / count
        normals = [np.array([np.cos(t), np.sin(t)]) for t in th]
    rows, worst = [], 0.0
    for nu in normals:
        a = density.F_via_marginal(kern, nu)
        b = density.F_via_halfspace(kern, nu)
        worst = max(worst, abs(a - b) / abs(a))
        rows.append(tuple(nu.tolist()) + (a, b))
    header = (["nu"] if kern.dimension == 1 else ["nu_x", "nu_y"]) + ["F_marginal", "F_halfspace"]
    out = Outcome()
    out.artifacts["density.csv"] = _csv(header, rows)
    prof = density.DensityProfile(kern)
    moments = kernels.moment_report(kern, density.default_moment_grid(kern.dimension))
    audit = []
    pairs = int(cfg.params.get("pairs", 32))
    for _ in range(pairs):
        if kern.dimension == 1:
            a, b = rng.choice([-1.0, 1.0], size=2)
            nu, nup = np.array([a]), np.array([b])
        else:
            t1, t2 = rng.uniform(0, 2 * np.pi, size=2)
            nu, nup = np.array([np.cos(t1), np.sin(t1)]), np.array([np.cos(t2), np.sin(t2)])
        chk = density.lipschitz_check(prof, nu, nup, moments=moments)
        audit.append(chk)
    out.artifacts["lipschitz.csv"] = _csv(["lhs", "bound", "ok"], [(c.lhs, c.bound, c.ok) for c in audit])
    out.summary = {"max_route_rel_diff": worst, "lipschitz_all_ok": all(c.ok for c in audit)}
    out.artifacts["fnu.json"] = out.summary
    out.check("two routes agree", worst <= 1e-4, max_rel_diff=worst)
    out.check("Lipschitz bound", all(c.ok for c in audit))
    return out


def exp_boundary(cfg: ExperimentConfig) -> Outcome:
    if cfg.shape is None:
        raise ConfigError("boundary needs a shape")
    shape = shapes.shape_from_dict(cfg.shape)
    kern = _kernel(cfg)
    val = density.boundary_integral(shape, kern)
    out = Outcome()
    rec = {"boundary_integral": val, "perimeter": float(shapes.perimeter(shape))}
    out.artifacts["boundary.json"] = rec
    out.summary = rec
    out.check("nonnegative", val >= 0)
    return out


def exp_product_check(cfg: ExperimentConfig) -> Outcome:
    a, b = cfg.params.get("interval", [0.0, 0.25])
    E = shapes.Intervals([[a, b]])
    sched = cfg.check_schedule()
    res = [fn.product_energy_check(E, e, cfg.resolution, cfg.period) for e in sched]
    out = Outcome()
    out.artifacts["product.csv"] = _csv(["eps", "lhs", "rhs", "rhs_product", "ok"],
                                        [(r.eps, r.lhs, r.rhs, r.rhs_product, r.ok) for r in res])
    out.check("product inequality at every eps", all(r.ok for r in res))
    out.summary = {"all_ok": all(r.ok for r in res)}
    return out


def exp_counterexample(cfg: ExperimentConfig) -> Outcome:
    depth = int(cfg.params.get("depth", 3))
    cap = int(cfg.params.get("resolution_cap", 2**22))
    out = Outcome()
    try:
        res = cx.build_sequence(depth, resolution_cap=cap)
    except cx.InfeasibleError as exc:
        out.artifacts["infeasible.json"] = {"stage": exc.stage, "constraint": exc.constraint, "message": str(exc)}
        out.check("construction feasible", False, stage=exc.stage, constraint=exc.constraint, message=str(exc))
        return out
    for s in res.states:
        out.artifacts[f"stage_{s.level:02d}.json"] = s.to_dict(include_cells=s.cell_count <= 4096)
    summ = _jsonable(res.summary())
    out.artifacts["summary.json"] = summ
    out.artifacts["energy.csv"] = _csv(["level", "eps", "energy", "threshold"],
                                       [(k + 1, e, en, t) for k, (e, en, t) in
                                        enumerate(zip(res.eps, res.energies, res.thresholds))])
    out.summary = {"eps": res.eps, "energies": res.energies, "all_certified": res.all_certified}
    out.check("all stages certified", res.all_certified)
    if depth > 1:
        out.check("energy at last scale below first", res.energies[-1] < res.energies[0], energies=res.energies)
    return out


def _fixture(name: str, grid: Grid) -> SampledField:
    if name == "disk":
        return shapes.rasterize(shapes.Ball((grid.period / 2,) * 2, grid.period / 4), grid)
    if name == "checkerboard":
        return diagnostic.refining_checkerboard(grid, depth=4)
    raise ConfigError(f"unknown fixture {name!r}")


def exp_diagnose(cfg: ExperimentConfig) -> Outcome:
    if cfg.input:
        u = read_raw(cfg.input)
    elif "fixture" in cfg.params:
        u = _fixture(cfg.params["fixture"], cfg.grid())
    else:
        u, _ = _field(cfg)
    sched = [float(s) for s in (cfg.schedule or [])]
    try:
        rep = diagnostic.finite_perimeter_verdict(u, sched)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep["config_hash"] = cfg.hash
    out = Outcome()
    out.artifacts["report.json"] = rep
    out.artifacts["census.csv"] = diagnostic.census_csv(rep)
    out.summary = {"verdict": rep["verdict"]}
    if "expect" in cfg.params:
        out.check("verdict", rep["verdict"] == cfg.params["expect"], verdict=rep["verdict"])
    return out


def exp_kernel_audit(cfg: ExperimentConfig) -> Outcome:
    out = Outcome()
    phi = kernels.phi_bandpass(1)
    grid = Grid(1, 1024.0, 2**14)
    m_phi = kernels.moment_report(phi, grid)
    m_gauss = kernels.moment_report(kernels.gaussian(1), grid)
    cdom = kernels.domination_constant()
    rec = {
        "phi_at_1": kernels.multiplier(phi, 1.0),
        "phi_moments": m_phi._asdict(),
        "gaussian_moments": m_gauss._asdict(),
        "domination_constant": cdom,
        "c_f": density.c_f(),
        "c_f_closed_form": kernels.PHI_HALFSPACE_DENSITY,
    }
    out.artifacts["kernel_audit.json"] = rec
    out.summary = rec
    out.check("phi mean zero", abs(m_phi.mass) < 1e-8, mass=m_phi.mass)
    out.check("gaussian mass one", abs(m_gauss.mass - 1) < 1e-8, mass=m_gauss.mass)
    out.check("domination constant finite", np.isfinite(cdom), value=cdom)
    return out


#: experiment name -> (recipe, one-line description with its mathematical anchor)
EXPERIMENTS: dict[str, tuple[Callable[[ExperimentConfig], Outcome], str]] = {
    "energy": (exp_energy, "normalized smoothed energy |log eps|^-1 ||gamma_eps * 1_E||^2_{H^1/2} along eps"),
    "decompose": (exp_decompose, "dyadic band-pass decomposition of the smoothed H^1/2 energy (telescoping)"),
    "scan": (exp_scan, "scale-localized energy r^-1 ||f_r * 1_E||^2 against the boundary integral of F(nu)"),
    "jump1d": (exp_jump1d, "1-D jump formula c_f sum |u+ - u-|^2 for piecewise constant u"),
    "fnu": (exp_fnu, "interface density F(nu): marginal and half-space quadratures, Lipschitz audit"),
    "boundary": (exp_boundary, "boundary integral of F(nu) over the reduced boundary of a shape"),
    "product-check": (exp_product_check, "product inequality ||gamma * 1_{ExE}||^2 <= 2 ||gamma * 1_E||^2"),
    "counterexample": (exp_counterexample, "compatible sequence phi_k with collapsing smoothed energy along eps_k"),
    "diagnose": (exp_diagnose, "delta-cube census of intermediate densities: finite vs infinite perimeter"),
    "kernel-audit": (exp_kernel_audit, "moments, cancellation and domination constant of the kernel family"),
}


def execute(cfg: ExperimentConfig) -> Outcome:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    return EXPERIMENTS[cfg.experiment][0](cfg)


def _write(path: Path, content) -> None:
    if isinstance(content, str):
        path.write_bytes(content.encode("utf-8"))
    else:
        path.write_text(json.dumps(_jsonable(content), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def run(cfg: ExperimentConfig, write: bool = True) -> tuple[int, Outcome]:
    """Execute, write artifacts, and return ``(exit_code, outcome)``."""
    outcome = execute(cfg)
    if write:
        d = Path(cfg.output)
        d.mkdir(parents=True, exist_ok=True)
        h = cfg.hash
        for name, content in outcome.artifacts.items():
            stem, _, ext = name.rpartition(".")
            if not isinstance(content, str):
                content = {**content, "config_hash": h} if isinstance(content, dict) else content
            _write(d / f"{stem}_{h}.{ext}", content)
        _write(d / f"config_{h}.json", {**cfg.to_dict(), "config_hash": h})
        _write(d / f"checks_{h}.json", {"checks": outcome.checks, "config_hash": h, "ok": outcome.ok,
                                         "summary": _jsonable(outcome.summary)})
        if not outcome.ok:
            _write(d / f"failure_{h}.json", {"config_hash": h, "experiment": cfg.experiment,
                                              "failed": [c for c in outcome.checks if not c["ok"]]})
    return (0 if outcome.ok else 1), outcome
