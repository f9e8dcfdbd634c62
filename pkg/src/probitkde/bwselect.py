"""Weighted least-squares cross-validation for the local-likelihood estimators.

The criterion for a smoothing parameter (fixed ``h`` or nearest-neighbour
fraction ``alpha``) is

    CV = int f~(s)^2 w(s) ds - (2/n) sum_i f~_(-i)(S_i) w(S_i),

where ``f~_(-i)`` is the fit at ``S_i`` on the other ``n - 1`` points and
``w`` is one of three weights built from a plug-in pilot density.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .classic import FixedBandwidth, bandwidth_sj_dpi, kernel_sums
from .errors import CapabilityError, ConvergenceError
from .loclik import (EstimatorSpec, KnnBandwidth, bandwidths_at, fit_many,
                     loo_moments, solve_moments)
from .probcore import QuadratureRule, simpson, std_normal_pdf
from .transform import PseudoSample, UnitSample

PILOT_FLOOR = 1e-300
CLIP_RATIO = 1e-14
LADDER_SIZE = 25
MIN_NODES = 1601
MAX_NODES = 200_001
REFINE_WIDTH = 1e-3
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class WeightScheme:
    """Weight applied to squared error on the probit scale.

    ``LSCV`` uses 1. With convention ``sec4`` (default) ``WLSCV1`` uses
    ``sqrt(phi / f_pilot)`` and ``WLSCV2`` uses ``phi / f_pilot``; convention
    ``sec5`` inverts both ratios.
    """

    kind: Literal["LSCV", "WLSCV1", "WLSCV2"] = "WLSCV1"
    convention: Literal["sec4", "sec5"] = "sec4"

    def __post_init__(self):
        if self.kind not in ("LSCV", "WLSCV1", "WLSCV2"):
            raise ValueError(f"unknown weight scheme {self.kind!r}")
        if self.convention not in ("sec4", "sec5"):
            raise ValueError(f"unknown weight convention {self.convention!r}")

    @property
    def needs_pilot(self) -> bool:
        return self.kind != "LSCV"

    def weights(self, s, pilot_values=None) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "LSCV":
            return np.ones_like(s)
        phi = np.maximum(std_normal_pdf(s), PILOT_FLOOR)
        ratio = phi / pilot_values if self.convention == "sec4" else pilot_values / phi
        return np.sqrt(ratio) if self.kind == "WLSCV1" else ratio


class Pilot:
    """Gaussian KDE with direct plug-in bandwidth, floored at 1e-300."""

    def __init__(self, data: np.ndarray, h: float):
        self.data = data
        self.h = h

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        vals = kernel_sums(s.ravel(), self.data, self.h) / (self.data.size * self.h)
        vals = np.maximum(vals, PILOT_FLOOR).reshape(s.shape)
        return vals if vals.ndim else float(vals)


def pilot_fS(pseudo) -> Pilot:
    data = _values(pseudo)
    return Pilot(data, bandwidth_sj_dpi(data).h)


def _values(sample) -> np.ndarray:
    if isinstance(sample, (PseudoSample, UnitSample)):
        return np.sort(sample.values)
    return np.sort(np.asarray(sample, dtype=float).ravel())


class SampleCache:
    """Per-sample quantities shared by every criterion evaluation."""

    def __init__(self, sample, pilot: Pilot | None = None):
        self.data = _values(sample)
        self._pilot = pilot
        self._dist = None
        self._pilot_at_data = None

    @property
    def n(self) -> int:
        return self.data.size

    def sorted_distances(self) -> np.ndarray:
        if self._dist is None:
            self._dist = np.sort(np.abs(self.data[:, None] - self.data[None, :]), axis=1)
        return self._dist

    def pilot(self) -> Pilot:
        if self._pilot is None:
            self._pilot = pilot_fS(self.data)
        return self._pilot

    def pilot_at(self, s) -> np.ndarray:
        # held constant beyond the data range, where phi / pilot is meaningless
        return self.pilot()(np.clip(s, self.data[0], self.data[-1]))

    def pilot_at_data(self) -> np.ndarray:
        if self._pilot_at_data is None:
            self._pilot_at_data = self.pilot()(self.data)
        return self._pilot_at_data

    def data_bandwidths(self, bw, p: int, leave_out: bool) -> np.ndarray:
        """Bandwidths at each observation, for the full or leave-one-out sample."""
        if isinstance(bw, FixedBandwidth):
            return np.full(self.n, bw.h)
        m = self.n - 1 if leave_out else self.n
        k = bw.k_of(m, p)
        # column 0 is the zero self-distance
        col = k if leave_out else k - 1
        return np.maximum(self.sorted_distances()[:, col], 1e-12)


def _weight_fn(scheme: WeightScheme, cache: SampleCache, weight: Callable | None):
    if weight is not None:
        return weight
    if not scheme.needs_pilot:
        return scheme.weights
    return lambda s: scheme.weights(s, cache.pilot_at(s))


def _first_term(spec: EstimatorSpec, cache: SampleCache, rule: QuadratureRule, wfn) -> float:
    data = cache.data

    def integrand(r: QuadratureRule):
        nodes = r.nodes()
        batch = fit_many(nodes, data, bandwidths_at(nodes, data, spec.bandwidth, spec.degree),
                         spec.degree)
        bad = batch.failed()
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ConvergenceError(f"fit at s={nodes[i]:.6g} ended with status {batch.status[i]}")
        f = batch.density
        return nodes, f * f * wfn(nodes)

    nodes, g = integrand(rule)
    if spec.family == "probit":
        keep = np.flatnonzero(g > CLIP_RATIO * np.max(g))
        if keep.size and (keep[0] > 0 or keep[-1] < nodes.size - 1):
            lo, hi = max(keep[0] - 1, 0), min(keep[-1] + 1, nodes.size - 1)
            rule = QuadratureRule(nodes[lo], nodes[hi], rule.points)
            nodes, g = integrand(rule)
    return simpson(g, (rule.upper - rule.lower) / (rule.points - 1))


def default_rule(spec: EstimatorSpec, cache: SampleCache) -> QuadratureRule:
    """Covering interval with node spacing at most an eighth of the smallest
    bandwidth at the data (at least 1601 nodes), so narrow local fits and the
    kinks of nearest-neighbour bandwidths are resolved."""
    lo, hi = criterion_interval(spec, cache)
    hmin = float(np.min(cache.data_bandwidths(spec.bandwidth, spec.degree, leave_out=False)))
    points = int(min(MAX_NODES, max(MIN_NODES, math.ceil(8.0 * (hi - lo) / hmin) + 1)))
    return QuadratureRule(lo, hi, points + (points % 2 == 0))


def criterion_interval(spec: EstimatorSpec, cache: SampleCache) -> tuple[float, float]:
    """``[min S - 4 hmax, max S + 4 hmax]``; ``[0, 1]`` for the raw family."""
    if spec.family == "raw":
        return 0.0, 1.0
    hmax = float(np.max(cache.data_bandwidths(spec.bandwidth, spec.degree, leave_out=False)))
    return cache.data[0] - 4.0 * hmax, cache.data[-1] + 4.0 * hmax


def wlscv_criterion(param: float, spec: EstimatorSpec, pseudo, scheme: WeightScheme,
                    rule: QuadratureRule | None = None, *, weight: Callable | None = None,
                    cache: SampleCache | None = None) -> float:
    """Cross-validation criterion at smoothing parameter ``param``.

    ``param`` is a bandwidth when ``spec`` carries a :class:`FixedBandwidth`
    and a neighbour fraction when it carries a :class:`KnnBandwidth`. For the
    raw family ``pseudo`` holds the observations themselves, only ``LSCV``
    is defined, and the first term is integrated over ``[0, 1]``.

    ``rule`` defaults to :func:`default_rule`; the interval is then shrunk
    to where the integrand exceeds 1e-14 of its peak. ``weight`` overrides
    the scheme's weight function.
    """
    spec = spec.with_param(param)
    cache = cache or SampleCache(pseudo)
    if spec.family == "raw" and scheme.needs_pilot and weight is None:
        raise CapabilityError("weighted criteria are defined on the probit scale only")
    n, p, data = cache.n, spec.degree, cache.data
    if n < 2:
        raise ValueError("cross-validation needs at least 2 observations")
    wfn = _weight_fn(scheme, cache, weight)

    lo, hi = criterion_interval(spec, cache)
    if rule is None:
        rule = default_rule(spec, cache)
    elif rule.lower > lo or rule.upper < hi:
        raise ValueError(f"quadrature rule [{rule.lower}, {rule.upper}] does not cover [{lo}, {hi}]")
    first = _first_term(spec, cache, rule, wfn)

    h_loo = cache.data_bandwidths(spec.bandwidth, p, leave_out=True)
    b, status, _, _ = solve_moments(loo_moments(data, h_loo, p), (n - 1) * h_loo, p)
    failed = ~np.isin(status, ("converged", "emptyNeighborhood"))
    if np.any(failed):
        i = int(np.argmax(failed))
        raise ConvergenceError(f"leave-one-out fit at s={data[i]:.6g} ended with status {status[i]}")
    loo = np.where(status == "emptyNeighborhood", 0.0, np.exp(b[:, 0]))
    if weight is None and scheme.needs_pilot:
        w = scheme.weights(data, cache.pilot_at_data())
    else:
        w = wfn(data)
    return first - 2.0 / n * float(np.sum(loo * w))


@dataclass
class SelectionResult:
    parameter: float
    criterion_value: float
    trace: list
    scheme: WeightScheme
    kind: str  # "h" or "alpha"
    failures: list = field(default_factory=list)


def default_ladder(spec: EstimatorSpec, cache: SampleCache) -> np.ndarray:
    if isinstance(spec.bandwidth, FixedBandwidth):
        h0 = bandwidth_sj_dpi(cache.data).h
        return np.geomspace(h0 / 8.0, 8.0 * h0, LADDER_SIZE)
    lo = max((spec.degree + 2) / cache.n, 0.02)
    return np.geomspace(min(lo, 1.0), 1.0, LADDER_SIZE)


def select(spec: EstimatorSpec, sample, scheme: WeightScheme, ladder=None, refine: bool = True,
           threads: int = 1, rule: QuadratureRule | None = None) -> SelectionResult:
    """Minimise the criterion over a log-spaced ladder, then golden-section.

    Refinement runs inside the bracket of the best ladder point until the
    bracket's relative width is 1e-3. The best point ever evaluated is
    returned. Failed candidates are kept in ``failures``; an error is raised
    only if every candidate fails.
    """
    cache = SampleCache(sample)
    if cache.n < 10:
        raise ValueError(f"bandwidth selection needs n >= 10, got {cache.n}")
    knn = isinstance(spec.bandwidth, KnnBandwidth)
    if scheme.needs_pilot:
        cache.pilot_at_data()
    if knn:
        cache.sorted_distances()
    ladder = np.sort(np.asarray(default_ladder(spec, cache) if ladder is None else ladder, dtype=float))
    memo: dict = {}
    failures: list = []
    results: dict = {}

    def key(c):
        if not knn:
            return c
        bw = KnnBandwidth(c)
        return bw.k_of(cache.n, spec.degree), bw.k_of(cache.n - 1, spec.degree)

    def evaluate(c):
        try:
            return wlscv_criterion(c, spec, None, scheme, rule, cache=cache), None
        except (ConvergenceError, ValueError, FloatingPointError) as exc:
            return math.inf, f"{type(exc).__name__}: {exc}"

    def run(cands):
        todo = []
        for c in cands:
            k = key(c)
            if k not in memo and k not in todo:
                todo.append(k)
        reps = {key(c): c for c in reversed(cands)}
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(lambda k: evaluate(reps[k]), todo))
        else:
            outs = [evaluate(reps[k]) for k in todo]
        for k, out in zip(todo, outs):
            memo[k] = out
        vals = []
        for c in cands:
            v, err = memo[key(c)]
            results[float(c)] = v
            if err is not None and (c, err) not in failures:
                failures.append((float(c), err))
            vals.append(v)
        return vals

    vals = run(list(ladder))
    if refine and ladder.size >= 3 and np.any(np.isfinite(vals)):
        j = int(np.argmin(vals))
        a = math.log(ladder[max(j - 1, 0)])
        b = math.log(ladder[min(j + 1, ladder.size - 1)])
        x1, x2 = b - _GOLD * (b - a), a + _GOLD * (b - a)
        f1, f2 = run([math.exp(x1), math.exp(x2)])
        while math.exp(b - a) - 1.0 > REFINE_WIDTH:
            if f1 <= f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLD * (b - a)
                f1 = run([math.exp(x1)])[0]
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLD * (b - a)
                f2 = run([math.exp(x2)])[0]

    trace = sorted((c, v) for c, v in results.items() if math.isfinite(v))
    if not trace:
        raise ConvergenceError(f"every candidate failed: {failures}")
    best = min(trace, key=lambda cv: cv[1])
    return SelectionResult(best[0], best[1], trace, scheme, "alpha" if knn else "h",
                           sorted(failures))
