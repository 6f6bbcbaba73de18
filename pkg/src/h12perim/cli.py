"""``h12`` command line entry point.

Every subcommand builds an :class:`~h12perim.experiments.ExperimentConfig`,
optionally starting from a JSON file given with ``--config``; explicit flags
override file values.  Exit status: 0 all checks passed, 1 some check
failed (a ``failure_<hash>.json`` record is written), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run
from .field import UnderResolvedScaleError

DEFAULT_RESOLUTION = {1: 2**16, 2: 1024}


def _dyadic_range(text: str) -> list[float]:
    """``"a:b"`` -> ``[2^-a, ..., 2^-b]``."""
    try:
        a, b = (int(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b with integers, got {text!r}")
    if b < a:
        raise argparse.ArgumentTypeError("scan range must be increasing exponents")
    return [2.0**-k for k in range(a, b + 1)]


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _shape_dimension(d: dict) -> int:
    return 1 if str(d.get("variant", "")).lower() == "intervals" else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="h12",
        description="Scale-localized H^1/2 energies, interface densities and perimeter diagnostics.",
    )
    sub = parser.add_subparsers(dest="experiment", metavar="experiment", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config; explicit flags override its values")
    common.add_argument("--out", dest="output", help="output directory (default h12_out)")
    common.add_argument("--dimension", type=int, choices=(1, 2))
    common.add_argument("--period", type=float)
    common.add_argument("--resolution", type=int, help="samples per axis (power of two)")
    common.add_argument("--seed", type=int)
    common.add_argument("--kernel", choices=("phi", "psi", "gaussian", "phi_bandpass", "psi_bandlimited"))

    field_args = argparse.ArgumentParser(add_help=False)
    field_args.add_argument("--shape", type=Path, help="shape JSON file")
    field_args.add_argument("--input", help="raw field file")

    def add(name, *parents):
        return sub.add_parser(name, parents=[common, *parents], help=EXPERIMENTS[name][1],
                              description=EXPERIMENTS[name][1])

    p = add("energy", field_args)
    p.add_argument("--eps-scan", type=_dyadic_range, dest="schedule", help="a:b for eps = 2^-a .. 2^-b")

    p = add("decompose", field_args)
    p.add_argument("--eps", type=float, help="smoothing scale")

    p = add("scan", field_args)
    p.add_argument("--r-scan", type=_dyadic_range, dest="schedule", help="a:b for r = 2^-a .. 2^-b")
    p.add_argument("--rel-tol", type=float)

    p = add("jump1d")
    p.add_argument("--breakpoints", type=_floats)
    p.add_argument("--values", type=_floats, help="n+1 values for n breakpoints")
    p.add_argument("--closure", choices=("jump", "ramp"))
    p.add_argument("--r-scan", type=_dyadic_range, dest="schedule")
    p.add_argument("--rel-tol", type=float)

    p = add("fnu")
    p.add_argument("--normals", type=int)
    p.add_argument("--pairs", type=int, help="random normal pairs for the Lipschitz audit")

    add("boundary", field_args)

    p = add("product-check")
    p.add_argument("--interval", type=_floats, help="a,b")
    p.add_argument("--eps-scan", type=_dyadic_range, dest="schedule")

    p = add("counterexample")
    p.add_argument("--depth", type=int)
    p.add_argument("--resolution-cap", type=int)

    p = add("diagnose", field_args)
    p.add_argument("--fixture", choices=("disk", "checkerboard"))
    p.add_argument("--scales", type=_floats, dest="schedule", help="cube sides, comma-separated")
    p.add_argument("--expect", choices=("finite-perimeter-consistent", "infinite-perimeter-consistent", "unresolved"))

    add("kernel-audit")
    return parser


PARAM_FLAGS = ("rel_tol", "breakpoints", "values", "closure", "normals", "pairs", "interval", "depth",
               "resolution_cap", "fixture", "expect")

DEFAULT_SCHEDULE = {
    "energy": [2.0**-k for k in range(5, 11)],
    "scan": [2.0**-k for k in range(6, 13)],
    "jump1d": [2.0**-k for k in range(6, 13)],
    "product-check": [2.0**-k for k in range(5, 10)],
}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if ns.config is not None:
        try:
            base = json.loads(ns.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    base["experiment"] = ns.experiment
    params = dict(base.get("params", {}))
    for key in PARAM_FLAGS:
        if getattr(ns, key, None) is not None:
            params[key] = getattr(ns, key)
    base["params"] = params
    for key in ("output", "dimension", "period", "resolution", "seed", "kernel", "schedule", "input"):
        if getattr(ns, key, None) is not None:
            base[key] = getattr(ns, key)
    if getattr(ns, "eps", None) is not None:
        base["schedule"] = [ns.eps]
    if getattr(ns, "shape", None) is not None:
        try:
            base["shape"] = json.loads(ns.shape.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read shape: {exc}") from exc
    if "dimension" not in base:
        if base.get("shape"):
            base["dimension"] = _shape_dimension(base["shape"])
        elif ns.experiment in ("diagnose",):
            base["dimension"] = 2
    dim = base.get("dimension", 1)
    # the product check works on the square of a 1-D interval, a 2-D raster
    default_n = 2048 if ns.experiment == "product-check" else DEFAULT_RESOLUTION.get(dim, 1024)
    base.setdefault("resolution", default_n)
    if ns.experiment in DEFAULT_SCHEDULE:
        base.setdefault("schedule", DEFAULT_SCHEDULE[ns.experiment])
    if ns.experiment == "decompose":
        base.setdefault("schedule", [2.0**-8])
    if ns.experiment == "diagnose" and "schedule" not in base:
        L = base.get("period", 1.0)
        base["schedule"] = [L / 32, L / 64, L / 128]
    return ExperimentConfig.from_dict(base)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        code, outcome = run(cfg)
    except (ConfigError, UnderResolvedScaleError, ValueError) as exc:
        print(f"h12 {ns.experiment}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"config_hash": cfg.hash, "ok": outcome.ok, "output": cfg.output,
                      "summary": outcome.summary}, sort_keys=True, default=float))
    for c in outcome.checks:
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {c['name']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
