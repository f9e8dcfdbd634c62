"""Monte-Carlo ISE/MISE benchmark over a catalogue of test densities."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .densities import TestDensity, get_density
from .pipeline import MethodSpec, fit_method
from .probcore import SeedSpec
from .transform import UnitSample

SCHEMA_VERSION = 1
CSV_FIELDS = ("density", "estimator", "n", "replication", "ise", "selected_param", "status")


def unit_grid(points: int = 999) -> np.ndarray:
    """``i / (points + 1)`` for ``i = 1..points``."""
    return np.arange(1, points + 1) / (points + 1)


def sample_density(d: TestDensity, n: int, seed: SeedSpec) -> UnitSample:
    return UnitSample.from_values(d.sample(n, seed))


def ise_on_grid(estimate, truth: TestDensity) -> float:
    """``(1/(G+1)) sum_i (fhat(x_i) - f(x_i))^2`` on the grid ``x_i = i/(G+1)``."""
    grid = estimate.grid
    if not np.allclose(grid, unit_grid(grid.size), rtol=0.0, atol=1e-12):
        raise ValueError("estimate must live on the grid i/(G+1), i = 1..G")
    diff = estimate.values - truth.pdf(grid)
    return float(np.sum(diff * diff) / (grid.size + 1))


@dataclass
class BenchConfig:
    densities: list
    estimators: list
    sample_sizes: list
    replications: int = 1
    grid_points: int = 999
    master_seed: int = 0
    weight_convention: str = "sec4"
    threads: int = 1
    plot_replication: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd and >= 3")
        if not (self.densities and self.estimators and self.sample_sizes):
            raise ValueError("densities, estimators and sample_sizes must be non-empty")
        for name in self.densities:
            get_density(name)
        for e in self.estimators:
            MethodSpec.parse(e, self.weight_convention)
        if any(int(n) < 2 for n in self.sample_sizes):
            raise ValueError("sample sizes must be >= 2")

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**raw)

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("threads")
        return out


@dataclass(frozen=True)
class Cell:
    density: str
    estimator: str
    n: int
    replication: int
    ise: float
    selected_param: float
    status: str
    message: str = ""


@dataclass
class Summary:
    mise: float
    se: float
    ok: int
    failed: int
    rank: int | None = None


@dataclass
class BenchResult:
    config: BenchConfig
    cells: list
    summary: dict  # (density, n) -> {estimator: Summary}
    curves: dict = field(default_factory=dict)  # (density, n) -> {estimator: values}
    warnings: list = field(default_factory=list)

    def ise_table(self, density: str, n: int, estimator: str) -> np.ndarray:
        return np.array([c.ise for c in self.cells
                         if (c.density, c.n, c.estimator) == (density, n, estimator)])


def rank_scores(mise: dict, se: dict) -> dict:
    """Rank 1 + number of estimators whose MISE plus two standard errors is
    still below this one's MISE. Estimators within two standard errors of
    the best share rank 1."""
    out = {}
    for j, mj in mise.items():
        out[j] = 1 + sum(1 for i, mi in mise.items() if i != j and mi + 2.0 * se[i] < mj)
    return out


def _run_task(cfg: BenchConfig, dname: str, n: int, rep: int, grid: np.ndarray):
    d = get_density(dname)
    xs = sample_density(d, n, SeedSpec(cfg.master_seed, rep))
    cells, curves = [], {}
    for ident in cfg.estimators:
        spec = MethodSpec.parse(ident, cfg.weight_convention)
        try:
            fitted = fit_method(spec, xs, grid)
            ise = ise_on_grid(fitted.estimate, d)
            if not math.isfinite(ise):
                raise FloatingPointError("non-finite ISE")
            cells.append(Cell(dname, ident, n, rep, ise, float(fitted.parameter), "ok"))
            if rep == cfg.plot_replication:
                curves[ident] = fitted.estimate.values
        except (ArithmeticError, ValueError, RuntimeError, NotImplementedError) as exc:
            cells.append(Cell(dname, ident, n, rep, math.nan, math.nan, "failed",
                              f"{type(exc).__name__}: {exc}"))
    return cells, curves


def run_benchmark(cfg: BenchConfig) -> BenchResult:
    """Every (density, n, replication) draws from stream ``(master_seed, replication)``
    and fits every estimator. The result does not depend on ``threads``."""
    grid = unit_grid(cfg.grid_points)
    tasks = [(dn, int(n), r) for dn in cfg.densities for n in cfg.sample_sizes
             for r in range(cfg.replications)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outs = list(pool.map(lambda t: _run_task(cfg, *t, grid), tasks))
    else:
        outs = [_run_task(cfg, *t, grid) for t in tasks]

    cells, curves, notes = [], {}, []
    for (dn, n, r), (cs, cv) in zip(tasks, outs):
        cells.extend(cs)
        if cv:
            curves[(dn, n)] = cv
    summary = {}
    for dn in cfg.densities:
        for n in cfg.sample_sizes:
            n = int(n)
            block = {}
            for e in cfg.estimators:
                col = [c for c in cells if (c.density, c.n, c.estimator) == (dn, n, e)]
                ok = np.array([c.ise for c in col if c.status == "ok"])
                failed = len(col) - ok.size
                mise = float(ok.mean()) if ok.size else math.nan
                se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
                block[e] = Summary(mise, se, int(ok.size), failed)
                if failed:
                    notes.append(f"{e} failed on {failed} of {len(col)} replications "
                                 f"({dn}, n={n}); excluded from ranking")
            ranked = {e: s for e, s in block.items() if s.failed == 0}
            for e, rk in rank_scores({e: s.mise for e, s in ranked.items()},
                                     {e: s.se for e, s in ranked.items()}).items():
                block[e].rank = rk
            summary[(dn, n)] = block
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return BenchResult(cfg, cells, summary, curves, notes)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def csv_text(res: BenchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for c in res.cells:
        w.writerow([c.density, c.estimator, c.n, c.replication, _fmt(c.ise),
                    _fmt(c.selected_param), c.status])
    return buf.getvalue()


def summary_json(res: BenchResult) -> dict:
    rows = []
    for (dn, n), block in res.summary.items():
        for e, s in block.items():
            rows.append({"density": dn, "n": n, "estimator": e,
                         "mise": None if math.isnan(s.mise) else s.mise, "se": s.se,
                         "replications": s.ok, "failures": s.failed, "rank": s.rank})
    failures = [{"density": c.density, "estimator": c.estimator, "n": c.n,
                 "replication": c.replication, "message": c.message}
                for c in res.cells if c.status != "ok"]
    return {"schemaVersion": SCHEMA_VERSION, "seed": res.config.master_seed,
            "config": res.config.echo(), "mise": rows, "failures": failures,
            "warnings": res.warnings}


def mise_matrix(summary: dict) -> dict:
    """``{(density, n, estimator): (mise, se)}`` from a parsed JSON summary."""
    return {(r["density"], r["n"], r["estimator"]): (r["mise"], r["se"]) for r in summary["mise"]}


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def svg_plot(grid, truth, curves: dict, title: str, width: int = 800, height: int = 500) -> str:
    """Overlay of the true density (dashed black, omitted if ``None``) and each estimate."""
    left, right, top, bottom = 60, 170, 30, 50
    pw, ph = width - left - right, height - top - bottom
    series = [np.asarray(v, dtype=float) for v in curves.values()]
    if truth is not None:
        series.append(np.asarray(truth, dtype=float))
    ymax = max(1e-12, max(float(np.max(v[np.isfinite(v)], initial=0.0)) for v in series))
    if truth is not None:
        ymax = min(ymax, 3.0 * float(np.max(truth)) + 1.0)
    ymax *= 1.05

    def pts(vals):
        xs = left + np.asarray(grid) * pw
        ys = top + ph - np.clip(np.asarray(vals) / ymax, 0.0, 1.0) * ph
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left}" y="20" font-size="14" font-family="sans-serif">{escape(title)}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for t in np.linspace(0.0, 1.0, 6):
        x = left + t * pw
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" font-size="11" text-anchor="middle" '
                   f'font-family="sans-serif">{t:.1f}</text>')
    for t in np.linspace(0.0, 1.0, 5):
        y = top + ph - t * ph
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" font-size="11" text-anchor="end" '
                   f'font-family="sans-serif">{t * ymax:.2f}</text>')
    legend = []
    if truth is not None:
        out.append(f'<polyline fill="none" stroke="black" stroke-width="2.5" '
                   f'stroke-dasharray="6,3" points="{pts(truth)}"/>')
        legend.append(("truth", "black"))
    for i, (name, vals) in enumerate(curves.items()):
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts(vals)}"/>')
        legend.append((name, color))
    for i, (name, color) in enumerate(legend):
        y = top + 15 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{y}" x2="{left + pw + 30}" y2="{y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{y + 4}" font-size="11" '
                   f'font-family="sans-serif">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(res: BenchResult, outdir, formats=("csv", "json")) -> list:
    """Write ``bench.csv``, ``summary.json`` and one SVG per (density, n)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = outdir / "bench.csv"
        p.write_text(csv_text(res))
        written.append(p)
    if "json" in formats:
        p = outdir / "summary.json"
        p.write_text(json.dumps(summary_json(res), indent=2) + "\n")
        written.append(p)
    if "svg" in formats:
        grid = unit_grid(res.config.grid_points)
        for (dn, n), curves in sorted(res.curves.items()):
            truth = get_density(dn).pdf(grid)
            p = outdir / f"{_safe(dn)}_n{n}.svg"
            title = f"{dn}, n={n}, replication {res.config.plot_replication}"
            p.write_text(svg_plot(grid, truth, curves, title))
            written.append(p)
    return written


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)
