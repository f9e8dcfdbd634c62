"""Local log-polynomial likelihood density estimation (degree 1 or 2).

At a point ``s`` the log-density is approximated by
``a0 + a1 (t - s) + a2 (t - s)^2`` and the coefficients maximise the
kernel-weighted likelihood

    sum_i K((S_i - s)/h) P(S_i - s) - n * int K((t - s)/h) exp(P(t - s)) dt.

With the Gaussian kernel and ``u = (t - s)/h`` the integral equals
``n h exp(a0) I0(b1, b2)`` where ``b1 = a1 h`` and ``b2 = a2 h^2``, so the
solver works in the scaled coefficients ``(a0, b1, b2)``: the data enter
only through the kernel moments ``c_r = sum_i K(u_i) u_i^r`` and every Newton
iteration costs O(1) per evaluation point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .classic import DensityEstimate, FixedBandwidth, _check_grid, renormalize
from .errors import ConvergenceError, DomainError
from .probcore import std_normal_pdf, std_normal_quantile
from .transform import BoundaryPolicy, PseudoSample, UnitSample

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)
EMPTY_MASS = 1e-12
SCORE_TOL = 1e-8
B2_WALL = 0.5 - 1e-6
_CHUNK = 2_000_000

CONVERGED = "converged"
EMPTY = "emptyNeighborhood"
MAX_ITER = "maxIterations"
BOUNDARY = "boundaryOfDomain"


def _log_i0(b1, b2):
    v = 1.0 / (1.0 - 2.0 * b2)
    return 0.5 * np.log(v) + 0.5 * b1 * b1 * v


def _tilted_moments(b1, b2):
    """Mean and raw moments 1..4 of N(mu, v), the kernel tilted by exp(b1 u + b2 u^2)."""
    v = 1.0 / (1.0 - 2.0 * b2)
    mu = b1 * v
    mu2 = mu * mu
    m1 = mu
    m2 = mu2 + v
    m3 = mu * (mu2 + 3.0 * v)
    m4 = mu2 * mu2 + 6.0 * mu2 * v + 3.0 * v * v
    return m1, m2, m3, m4


def gauss_poly_integrals(b1: float, b2: float):
    """``I_r = int u^r phi(u) exp(b1 u + b2 u^2) du`` for r = 0, 1, 2.

    Raises
    ------
    DomainError
        When ``b2 >= 1/2`` and the integrals diverge.
    """
    if not b2 < 0.5:
        raise DomainError(f"integral diverges for b2 = {b2} >= 1/2")
    i0 = math.exp(float(_log_i0(b1, b2)))
    m1, m2, _, _ = _tilted_moments(b1, b2)
    return i0, m1 * i0, m2 * i0


@dataclass
class LocalFit:
    s: float
    p: int
    coefficients: tuple
    status: str
    iterations: int
    score_norm: float
    h: float

    @property
    def density(self) -> float:
        if self.status == EMPTY:
            return 0.0
        return math.exp(self.coefficients[0])


@dataclass
class FitBatch:
    """Vectorised result of many local fits (scaled coefficients)."""

    points: np.ndarray
    h: np.ndarray
    p: int
    scaled: np.ndarray  # columns a0, b1[, b2]
    status: np.ndarray
    iterations: np.ndarray
    score_norm: np.ndarray

    @property
    def density(self) -> np.ndarray:
        out = np.exp(self.scaled[:, 0])
        out[self.status == EMPTY] = 0.0
        return out

    def coefficients(self) -> np.ndarray:
        """Coefficients ``a_r = b_r / h^r`` on the data scale."""
        a = self.scaled.copy()
        for r in range(1, self.p + 1):
            a[:, r] /= self.h**r
        return a

    def failed(self) -> np.ndarray:
        return ~np.isin(self.status, (CONVERGED, EMPTY))

    def fit(self, i: int) -> LocalFit:
        return LocalFit(float(self.points[i]), self.p, tuple(self.coefficients()[i]),
                        str(self.status[i]), int(self.iterations[i]),
                        float(self.score_norm[i]), float(self.h[i]))


def kernel_moments(points, data, h, p: int) -> np.ndarray:
    """Columns ``c_r = sum_i phi(u_i) u_i^r``, ``u_i = (data_i - point)/h``, r = 0..p."""
    points = np.asarray(points, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), points.shape)
    out = np.empty((points.size, p + 1))
    rows = max(1, _CHUNK // max(data.size, 1))
    for lo in range(0, points.size, rows):
        sl = slice(lo, lo + rows)
        u = (data[None, :] - points[sl, None]) / h[sl, None]
        w = std_normal_pdf(u)
        out[sl, 0] = w.sum(axis=1)
        wu = w * u
        out[sl, 1] = wu.sum(axis=1)
        if p == 2:
            out[sl, 2] = (wu * u).sum(axis=1)
    return out


def loo_moments(data: np.ndarray, h, p: int) -> np.ndarray:
    """Kernel moments at each ``data[i]`` computed without observation ``i``."""
    n = data.size
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    out = np.empty((n, p + 1))
    rows = max(1, _CHUNK // max(n, 1))
    for lo in range(0, n, rows):
        sl = slice(lo, min(lo + rows, n))
        u = (data[None, :] - data[sl, None]) / h[sl, None]
        w = std_normal_pdf(u)
        w[np.arange(w.shape[0]), np.arange(sl.start, sl.stop)] = 0.0
        out[sl, 0] = w.sum(axis=1)
        wu = w * u
        out[sl, 1] = wu.sum(axis=1)
        if p == 2:
            out[sl, 2] = (wu * u).sum(axis=1)
    return out


def _objective(b, c, nh, p):
    b2 = b[:, 2] if p == 2 else 0.0
    lin = c[:, 0] * b[:, 0] + c[:, 1] * b[:, 1]
    if p == 2:
        lin = lin + c[:, 2] * b2
    with np.errstate(over="ignore", invalid="ignore"):
        e = nh * np.exp(b[:, 0] + _log_i0(b[:, 1], b2))
        val = lin - e
    if p == 2:
        val = np.where(b2 < 0.5, val, -np.inf)
    return np.where(np.isfinite(val), val, -np.inf)


def _grad_hess(b, c, nh, p):
    b2 = b[:, 2] if p == 2 else np.zeros(len(b))
    e = nh * np.exp(b[:, 0] + _log_i0(b[:, 1], b2))
    m1, m2, m3, m4 = _tilted_moments(b[:, 1], b2)
    one = np.ones_like(m1)
    if p == 1:
        g = np.stack([c[:, 0] - e, c[:, 1] - e * m1], axis=1)
        mom = np.stack([np.stack([one, m1], -1), np.stack([m1, m2], -1)], -2)
    else:
        g = np.stack([c[:, 0] - e, c[:, 1] - e * m1, c[:, 2] - e * m2], axis=1)
        mom = np.stack([np.stack([one, m1, m2], -1),
                        np.stack([m1, m2, m3], -1),
                        np.stack([m2, m3, m4], -1)], -2)
    return g, e, mom


def moment_start(c, nh, p):
    """Closed-form stationary point: match the tilted-normal mean and variance
    to the kernel-weighted mean and variance of ``u``. Rows where the weighted
    variance vanishes (p = 2) come back as NaN."""
    mu = c[:, 1] / c[:, 0]
    b = np.zeros((len(c), p + 1))
    if p == 1:
        b[:, 1] = mu
        b2 = 0.0
    else:
        var = c[:, 2] / c[:, 0] - mu * mu
        with np.errstate(divide="ignore", invalid="ignore"):
            b[:, 1] = mu / var
            b[:, 2] = 0.5 * (1.0 - 1.0 / var)
        b[var <= 1e-12, 1:] = np.nan
        b2 = b[:, 2]
    b[:, 0] = np.log(c[:, 0] / nh) - _log_i0(b[:, 1], b2)
    return b


def solve_moments(c, nh, p: int, start: str = "moments", max_iter: int = 100,
                  tol: float = SCORE_TOL, trace=None):
    """Damped Newton ascent on the local likelihood for a batch of points.

    ``c`` holds kernel moments (one row per point) and ``nh`` the matching
    ``n * h``. ``start`` is ``"moments"`` (closed-form stationary point, then
    Newton polish) or ``"flat"`` (the degree-0 fit ``a0 = log(c0 / nh)``).
    Each Newton step is halved until the objective does not decrease; the
    log-quadratic coefficient is kept at or below the divergence wall.

    Returns ``(scaled coefficients, status, iterations, score_norm)``. The
    score norm is the max-abs gradient in scaled coordinates divided by
    ``c0``, so it is comparable across neighbourhood sizes.
    """
    c = np.asarray(c, dtype=float)
    m = len(c)
    nh = np.broadcast_to(np.asarray(nh, dtype=float), (m,))
    status = np.full(m, CONVERGED, dtype=object)
    iters = np.zeros(m, dtype=int)
    score = np.zeros(m)
    b = np.zeros((m, p + 1))
    empty = ~(c[:, 0] >= EMPTY_MASS)
    status[empty] = EMPTY
    b[empty, 0] = -np.inf
    live = ~empty
    if not np.any(live):
        return b, status, iters, score

    if start not in ("moments", "flat"):
        raise ValueError(f"unknown start {start!r}")
    cl, nhl = c[live], nh[live]
    flat = np.ones(len(cl), dtype=bool)
    if start == "moments":
        bl = moment_start(cl, nhl, p)
        flat = ~np.all(np.isfinite(bl), axis=1)
        if p == 2:
            flat |= bl[:, 2] > B2_WALL
    else:
        bl = np.zeros((len(cl), p + 1))
    bl[flat] = 0.0
    bl[flat, 0] = np.log(cl[flat, 0] / nhl[flat])
    if p == 2:
        # no finite maximiser when the weighted data sit on a single point
        var = cl[:, 2] / cl[:, 0] - (cl[:, 1] / cl[:, 0]) ** 2
        hopeless = var <= 1e-12
    else:
        hopeless = np.zeros(len(cl), dtype=bool)

    st = np.full(len(cl), MAX_ITER, dtype=object)
    it = np.zeros(len(cl), dtype=int)
    sc = np.full(len(cl), np.inf)
    obj = _objective(bl, cl, nhl, p)
    active = ~hopeless
    if trace is not None:
        trace.append(obj.copy())
    for k in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g, e, mom = _grad_hess(bl[idx], cl[idx], nhl[idx], p)
        sc[idx] = np.max(np.abs(g), axis=1) / cl[idx, 0]
        done = sc[idx] <= tol
        st[idx[done]] = CONVERGED
        active[idx[done]] = False
        idx, g, e, mom = idx[~done], g[~done], e[~done], mom[~done]
        if idx.size == 0 or k == max_iter:
            break
        it[idx] += 1
        try:
            step = np.linalg.solve(mom, g[..., None])[..., 0] / e[:, None]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(mm, gg, rcond=None)[0] for mm, gg in zip(mom, g)]) / e[:, None]
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(60):
            cand = bl[idx] + t[:, None] * step
            if p == 2:
                cand[:, 2] = np.minimum(cand[:, 2], B2_WALL)
            newobj = _objective(cand, cl[idx], nhl[idx], p)
            ok = pending & (newobj >= obj[idx])
            sel = idx[ok]
            bl[sel] = cand[ok]
            obj[sel] = newobj[ok]
            pending &= ~ok
            if not np.any(pending):
                break
            t[pending] *= 0.5
        # no ascent possible at all: stalled at roundoff, stop iterating
        active[idx[pending]] = False
        if trace is not None:
            trace.append(obj.copy())

    st[hopeless] = BOUNDARY
    b[live], status[live], iters[live], score[live] = bl, st, it, sc
    return b, status, iters, score


def _data(sample) -> np.ndarray:
    if isinstance(sample, (UnitSample, PseudoSample)):
        return sample.values
    return np.asarray(sample, dtype=float).ravel()


def fit_many(points, sample, h, p: int, start: str = "moments", max_iter: int = 100) -> FitBatch:
    """Local fits at many points with (possibly point-specific) bandwidths ``h``."""
    if p not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {p}")
    data = _data(sample)
    if data.size == 0:
        raise ValueError("sample is empty")
    points = np.atleast_1d(np.asarray(points, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), points.shape).copy()
    c = kernel_moments(points, data, h, p)
    b, status, iters, score = solve_moments(c, data.size * h, p, start, max_iter)
    return FitBatch(points, h, p, b, status, iters, score)


def fit_local(s: float, sample, h: float, p: int, start: str = "moments",
              max_iter: int = 100) -> LocalFit:
    """Maximise the local log-polynomial likelihood at ``s``.

    Non-convergence is reported through ``status``, never raised.
    """
    return fit_many([s], sample, h, p, start, max_iter).fit(0)


def local_score(coeffs, s: float, sample, h: float):
    """Objective, gradient and Hessian of the local likelihood in ``(a0, .., a_p)``.

    The objective is ``sum_i K(u_i) P(S_i - s) - n h exp(a0) I0(a1 h, a2 h^2)``.
    """
    a = np.asarray(coeffs, dtype=float)
    p = a.size - 1
    if p not in (1, 2):
        raise ValueError("coefficients must have length 2 or 3")
    data = _data(sample)
    scale = h ** np.arange(p + 1)
    b = (a * scale)[None, :]
    if p == 2 and not b[0, 2] < 0.5:
        raise DomainError(f"a2 h^2 = {b[0, 2]} >= 1/2: the likelihood integral diverges")
    c = kernel_moments(np.array([s]), data, np.array([h]), p)
    nh = np.array([data.size * h])
    obj = float(_objective(b, c, nh, p)[0])
    g, e, mom = _grad_hess(b, c, nh, p)
    grad = g[0] * scale
    hess = -e[0] * mom[0] * np.outer(scale, scale)
    return obj, grad, hess


@dataclass(frozen=True)
class KnnBandwidth:
    """Nearest-neighbour bandwidth with smoothing fraction ``alpha = k / n``."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def k_of(self, n: int, p: int = 1) -> int:
        k = max(p + 2, int(math.floor(self.alpha * n + 0.5)))
        return min(k, n)


def knn_distance(s: float, pseudo, k: int) -> float:
    """Distance from ``s`` to its ``k``-th nearest observation."""
    data = _data(pseudo)
    if not 1 <= k <= data.size:
        raise ValueError(f"k must lie in [1, {data.size}], got {k}")
    d = np.abs(data - s)
    return float(np.partition(d, k - 1)[k - 1])


def knn_distances(points, data: np.ndarray, k: int) -> np.ndarray:
    """Vectorised :func:`knn_distance` over ``points``."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if not 1 <= k <= data.size:
        raise ValueError(f"k must lie in [1, {data.size}], got {k}")
    out = np.empty(points.size)
    rows = max(1, _CHUNK // max(data.size, 1))
    for lo in range(0, points.size, rows):
        d = np.abs(points[lo:lo + rows, None] - data[None, :])
        out[lo:lo + rows] = np.partition(d, k - 1, axis=1)[:, k - 1]
    return out


Bandwidth = Union[FixedBandwidth, KnnBandwidth]


@dataclass(frozen=True)
class EstimatorSpec:
    family: Literal["probit", "raw"] = "probit"
    degree: int = 2
    bandwidth: Bandwidth = field(default_factory=lambda: KnnBandwidth(0.5))

    def __post_init__(self):
        if self.family not in ("probit", "raw"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if not isinstance(self.bandwidth, (FixedBandwidth, KnnBandwidth)):
            raise TypeError("bandwidth must be FixedBandwidth or KnnBandwidth")

    @property
    def name(self) -> str:
        base = {"probit": "t", "raw": "raw"}[self.family]
        return f"{base}{self.degree}"

    def with_param(self, value: float) -> "EstimatorSpec":
        bw = (FixedBandwidth(value) if isinstance(self.bandwidth, FixedBandwidth)
              else KnnBandwidth(value))
        return EstimatorSpec(self.family, self.degree, bw)


def bandwidths_at(points, data: np.ndarray, bw: Bandwidth, p: int) -> np.ndarray:
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if isinstance(bw, FixedBandwidth):
        return np.full(points.shape, bw.h)
    d = knn_distances(points, data, bw.k_of(data.size, p))
    return np.maximum(d, 1e-12)


def fit_on_scale(points, data: np.ndarray, spec: EstimatorSpec) -> FitBatch:
    """Fits at ``points`` (already on the fitting scale) for ``spec``."""
    h = bandwidths_at(points, data, spec.bandwidth, spec.degree)
    return fit_many(points, data, h, spec.degree)


def estimate_density(xs, spec: EstimatorSpec, grid, policy: BoundaryPolicy | None = None,
                     renorm: bool = False) -> DensityEstimate:
    """Local-likelihood density estimate on ``grid`` inside (0, 1).

    ``probit`` fits the pseudo-sample at ``Phi^{-1}(x)`` and back-transforms
    ``exp(a0)`` by ``phi(Phi^{-1}(x))``; ``raw`` fits the observations
    directly at ``x``. Raises :class:`ConvergenceError` naming the first
    grid point whose fit did not converge.
    """
    if not isinstance(xs, UnitSample):
        xs = UnitSample.from_values(xs, policy)
    grid = _check_grid(grid)
    if spec.family == "probit":
        data = np.sort(std_normal_quantile(xs.values))
        points = std_normal_quantile(grid)
    else:
        data = np.sort(xs.values)
        points = grid
    batch = fit_on_scale(points, data, spec)
    bad = batch.failed()
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ConvergenceError(
            f"local fit at x={grid[i]:.6g} ended with status {batch.status[i]}")
    vals = batch.density
    if spec.family == "probit":
        vals = vals / std_normal_pdf(points)
    bwmeta = ({"h": spec.bandwidth.h} if isinstance(spec.bandwidth, FixedBandwidth)
              else {"alpha": spec.bandwidth.alpha, "k": spec.bandwidth.k_of(data.size, spec.degree)})
    meta = {"estimator": spec.name, "family": spec.family, "degree": spec.degree, **bwmeta,
            "empty_fits": int(np.count_nonzero(batch.status == EMPTY))}
    if xs.epsilon is not None:
        meta["clamp_epsilon"] = xs.epsilon
        meta["clamped"] = xs.clamped
    est = DensityEstimate(grid, vals, "unit", False, meta)
    return renormalize(est) if renorm else est
