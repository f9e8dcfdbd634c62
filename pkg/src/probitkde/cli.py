"""Command-line interface: estimate, select-bandwidth, bench, theory-check.

Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bench, theory
from .densities import get_density
from .classic import FixedBandwidth, amended_probit_estimate, naive_probit_estimate
from .errors import ConvergenceError, DomainError
from .loclik import EstimatorSpec, estimate_density
from .pipeline import METHODS, SELECTORS, MethodSpec, fit_method
from .probcore import SeedSpec
from .transform import BoundaryPolicy, UnitSample

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class DataError(Exception):
    pass


def read_values(path, clamp: float | None) -> UnitSample:
    """One decimal per line; blank lines and ``#`` comments are skipped."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    vals = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            v = float(text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: not a number: {text!r}") from None
        if not math.isfinite(v):
            raise DataError(f"{path}:{lineno}: value is not finite")
        if clamp is None and not 0.0 < v < 1.0:
            raise DataError(f"{path}:{lineno}: value {text} is outside (0, 1); "
                            "use --clamp EPS to pull boundary values inside")
        vals.append(v)
    if not vals:
        raise DataError(f"{path}: no values")
    policy = BoundaryPolicy("clamp", clamp) if clamp is not None else BoundaryPolicy()
    return UnitSample.from_values(vals, policy)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _odd_grid(text):
    v = _positive_int(text)
    if v < 3 or v % 2 == 0:
        raise argparse.ArgumentTypeError("grid size must be odd and >= 3")
    return v


def _add_method_flags(p):
    p.add_argument("--method", choices=METHODS, default="t2",
                   help="estimator (default t2: local log-quadratic on the probit scale)")
    p.add_argument("--bandwidth", choices=("fixed", "knn"), default="knn",
                   help="fixed global bandwidth h or nearest-neighbour fraction alpha (default knn)")
    p.add_argument("--h", type=float, help="fixed bandwidth; for classic methods overrides plug-in")
    p.add_argument("--alpha", type=float, help="nearest-neighbour fraction in (0, 1]")
    p.add_argument("--select", choices=SELECTORS, default="wlscv1",
                   help="cross-validation scheme for t1/t2/raw1/raw2 (default wlscv1; "
                        "wlscv2 is recommended for n < 100; raw methods accept lscv only)")
    p.add_argument("--weight-convention", choices=("sec4", "sec5"), default="sec4",
                   help="sec4: weights phi/f_pilot (default); sec5: the inverse ratio f_pilot/phi")
    p.add_argument("--clamp", type=float, metavar="EPS",
                   help="move values at or beyond 0/1 to [EPS, 1-EPS] instead of rejecting them")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads for candidate evaluation (default: all cores)")
    p.add_argument("--seed", type=int, default=0, help="recorded in metadata; estimation is deterministic")


def _method_spec(args) -> MethodSpec:
    select = args.select
    if args.method in ("conventional", "dai", "naive", "amended"):
        select = "none"
    elif (args.h is not None and args.bandwidth == "fixed") or (
            args.alpha is not None and args.bandwidth == "knn"):
        select = "none"
    return MethodSpec(args.method, args.bandwidth, select, args.h, args.alpha, args.weight_convention)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probitkde",
        description="Probit-transformation kernel density estimation on [0, 1].")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate a density on an evaluation grid",
                       description="Write x,fhat to estimate.csv and metadata to estimate.json. "
                                   "Supplying --h (fixed) or --alpha (knn) skips selection.")
    p.add_argument("--in", dest="input", required=True, help="file with one value per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid", type=_odd_grid, default=999, help="grid size G; points i/(G+1) (default 999)")
    p.add_argument("--svg", action="store_true", help="also write estimate.svg")
    _add_method_flags(p)

    p = sub.add_parser("select-bandwidth", help="run cross-validation and report the choice",
                       description="Print (or write with --out) the selected parameter and the criterion trace.")
    p.add_argument("--in", dest="input", required=True, help="file with one value per line")
    p.add_argument("--out", help="JSON output file (default: stdout)")
    _add_method_flags(p)

    p = sub.add_parser("bench", help="Monte-Carlo ISE/MISE benchmark",
                       description="Config JSON keys: densities, estimators, sample_sizes, replications, "
                                   "grid_points, master_seed, weight_convention, plot_replication.")
    p.add_argument("--config", required=True, help="benchmark configuration JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override master_seed from the config")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads (results do not depend on it)")
    p.add_argument("--weight-convention", choices=("sec4", "sec5"),
                   help="override weight_convention from the config")
    p.add_argument("--svg", action="store_true", help="also write overlay plots")

    p = sub.add_parser("theory-check", help="tabulate leading bias and variance",
                       description="Leading-order bias and variance per estimator, density, x and h; "
                                   "--mc R adds Monte-Carlo estimates from R replications.")
    p.add_argument("--density", default="beta44", help="catalogue name or gcc(rho,u0) (default beta44)")
    p.add_argument("--estimators", default="naive,amended,t1,t2",
                   help="comma list from naive,amended,gc,t1,t2 (default naive,amended,t1,t2)")
    p.add_argument("--x", default="0.1,0.35,0.5", help="comma list of evaluation points")
    p.add_argument("--h", type=float, default=0.15, help="bandwidth on the probit scale (default 0.15)")
    p.add_argument("--n", type=_positive_int, default=1000, help="sample size (default 1000)")
    p.add_argument("--mc", type=int, default=0, help="Monte-Carlo replications (default 0: formulas only)")
    p.add_argument("--seed", type=int, default=0, help="master seed for --mc")
    p.add_argument("--out", help="CSV output file (default: stdout)")
    return parser


def cmd_estimate(args) -> int:
    xs = read_values(args.input, args.clamp)
    spec = _method_spec(args)
    grid = bench.unit_grid(args.grid)
    fitted = fit_method(spec, xs, grid, threads=args.threads)
    est = fitted.estimate
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "estimate.csv", "w") as fh:
        fh.write("x,fhat\n")
        for x, v in zip(est.grid, est.values):
            fh.write(f"{float(x)!r},{float(v)!r}\n")
    meta = {
        "estimator": spec.name, "method": spec.method, "n": xs.n,
        "bandwidth": spec.bandwidth if spec.method in ("t1", "t2", "raw1", "raw2") else "fixed",
        "parameter": fitted.parameter, "select": spec.select, "seed": args.seed,
        "normalized": est.normalized, "mass": est.mass(),
        "mass_before_renorm": est.metadata.get("mass_before_renorm"),
        "clamped": xs.clamped, "clamp_epsilon": xs.epsilon,
        "grid_points": int(est.grid.size),
    }
    if fitted.selection is not None:
        meta["scheme"] = spec.select
        meta["weight_convention"] = spec.weight_convention
        meta["criterion"] = fitted.selection.criterion_value
    (out / "estimate.json").write_text(json.dumps(meta, indent=2) + "\n")
    if args.svg:
        (out / "estimate.svg").write_text(
            bench.svg_plot(est.grid, None, {spec.name: est.values}, f"{spec.name}, n={xs.n}"))
    print(f"wrote {out / 'estimate.csv'} ({spec.name}, parameter={fitted.parameter:.6g})")
    return EXIT_OK


def cmd_select(args) -> int:
    xs = read_values(args.input, args.clamp)
    spec = _method_spec(args)
    if spec.method not in ("t1", "t2", "raw1", "raw2") or spec.select == "none":
        raise DataError("select-bandwidth needs --method t1/t2/raw1/raw2 and --select lscv/wlscv1/wlscv2")
    fitted = fit_method(spec, xs, bench.unit_grid(3), threads=args.threads)
    sel = fitted.selection
    doc = {"estimator": spec.name, "kind": sel.kind, "parameter": sel.parameter,
           "criterion": sel.criterion_value, "scheme": spec.select,
           "weight_convention": spec.weight_convention, "n": xs.n,
           "trace": [[c, v] for c, v in sel.trace],
           "failures": [[c, m] for c, m in sel.failures]}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("config must be a JSON object")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.weight_convention is not None:
        raw["weight_convention"] = args.weight_convention
    raw["threads"] = args.threads
    try:
        cfg = bench.BenchConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise DataError(f"invalid config: {exc}") from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = bench.run_benchmark(cfg)
    formats = ("csv", "json", "svg") if args.svg else ("csv", "json")
    written = bench.emit_report(res, args.out, formats)
    failed = sum(1 for c in res.cells if c.status != "ok")
    for path in written:
        print(f"wrote {path}")
    if failed:
        print(f"warning: {failed} failed cells (see summary.json)", file=sys.stderr)
    return EXIT_OK


def _floats(text: str, what: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise DataError(f"--{what}: expected a comma-separated list of numbers") from None


def cmd_theory(args) -> int:
    try:
        d = get_density(args.density)
    except (KeyError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    tags = [t.strip() for t in args.estimators.split(",") if t.strip()]
    for t in tags:
        if t not in ("naive", "amended", "gc", "t1", "t2"):
            raise DataError(f"unknown estimator {t!r} for theory-check")
    xs = _floats(args.x, "x")
    if any(not 0.0 < x < 1.0 for x in xs):
        raise DataError("--x values must lie in (0, 1)")
    rows = []
    mc = _monte_carlo(d, tags, xs, args) if args.mc > 0 else {}
    for t in tags:
        prof = theory.asymptotic_profile(t, d)
        for x in xs:
            b = prof.leading_bias(x, args.h)
            try:
                v = prof.leading_variance(x, args.n, args.h)
            except NotImplementedError:
                v = math.nan
            row = [t, d.name, x, args.h, args.n, b, v]
            if mc:
                row += list(mc.get((t, float(x)), (math.nan, math.nan)))
            rows.append(row)
    header = ["estimator", "density", "x", "h", "n", "bias", "variance"]
    if mc:
        header += ["mc_bias", "mc_variance"]
    lines = [",".join(header)] + [",".join(_cell(v) for v in r) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _monte_carlo(d, tags, xs, args) -> dict:
    """Un-renormalised estimates at ``xs`` over ``--mc`` seeded samples."""
    grid = np.sort(np.asarray(xs, dtype=float))
    fitters = {
        "naive": lambda s: naive_probit_estimate(s, args.h, grid),
        "amended": lambda s: amended_probit_estimate(s, args.h, grid, renorm=False),
        "t1": lambda s: estimate_density(s, EstimatorSpec("probit", 1, FixedBandwidth(args.h)), grid),
        "t2": lambda s: estimate_density(s, EstimatorSpec("probit", 2, FixedBandwidth(args.h)), grid),
    }
    fits = {t: [] for t in tags if t in fitters}
    for r in range(args.mc):
        sample = UnitSample.from_values(d.sample(args.n, SeedSpec(args.seed, r)))
        for t in fits:
            fits[t].append(fitters[t](sample).values)
    truth = d.pdf(grid)
    out = {}
    for t, reps in fits.items():
        arr = np.array(reps)
        for j, x in enumerate(grid):
            out[(t, float(x))] = (float(arr[:, j].mean() - truth[j]), float(arr[:, j].var(ddof=1)))
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"estimate": cmd_estimate, "select-bandwidth": cmd_select,
                "bench": cmd_bench, "theory-check": cmd_theory}
    try:
        return handlers[args.command](args)
    except (DataError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
