"""Conventional kernel density estimation and the probit-scale KDE family.

Covers the plain Gaussian KDE, normal-reference and Sheather-Jones
direct plug-in bandwidths, the local-bandwidth boundary correction of Dai
and Sperlich, and the naive and amended probit-transformation estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .probcore import simpson, std_normal_pdf, std_normal_quantile
from .transform import PseudoSample, UnitSample, back_transform_density

_CHUNK = 2_000_000


@dataclass(frozen=True)
class FixedBandwidth:
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.h}")

    def __float__(self):
        return float(self.h)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    domain: str = "unit"  # "unit" or "real"
    normalized: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise ValueError("density values must be non-negative")
        if self.domain not in ("unit", "real"):
            raise ValueError(f"unknown domain tag {self.domain!r}")

    def mass(self) -> float:
        """Simpson mass of the values over the grid span."""
        return simpson(self.values, _uniform_step(self.grid))


def _uniform_step(grid: np.ndarray) -> float:
    steps = np.diff(grid)
    step = (grid[-1] - grid[0]) / (grid.size - 1)
    if not np.allclose(steps, step, rtol=1e-6, atol=0.0):
        raise ValueError("Simpson mass needs an equally spaced grid")
    return step


def _as_h(h) -> float:
    return float(h.h) if isinstance(h, FixedBandwidth) else float(h)


def _sample_values(sample) -> np.ndarray:
    if isinstance(sample, (UnitSample, PseudoSample)):
        return sample.values
    return np.asarray(sample, dtype=float).ravel()


def kernel_sums(points, data, h) -> np.ndarray:
    """``sum_i phi((points - data_i) / h)`` for every point; ``h`` may vary per point."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), points.shape)
    out = np.empty(points.shape)
    rows = max(1, _CHUNK // max(data.size, 1))
    for lo in range(0, points.size, rows):
        sl = slice(lo, lo + rows)
        u = (points[sl, None] - data[None, :]) / h[sl, None]
        out[sl] = std_normal_pdf(u).sum(axis=1)
    return out


def kde_eval(sample, h, s):
    """Gaussian kernel density estimate ``(1/nh) sum K((s - S_i)/h)`` at ``s``."""
    data = _sample_values(sample)
    if data.size == 0:
        raise ValueError("sample is empty")
    hv = _as_h(h)
    out = kernel_sums(s, data, hv) / (data.size * hv)
    return out if np.ndim(s) else float(out[0])


def _spread(data: np.ndarray) -> float:
    sd = float(np.std(data, ddof=1))
    q75, q25 = np.percentile(data, [75, 25])
    iqr = float(q75 - q25)
    cands = [v for v in (sd, iqr / 1.349) if v > 0]
    if not cands:
        raise ValueError("sample has zero spread; bandwidth is undefined")
    return min(cands)


def bandwidth_normal_reference(sample) -> FixedBandwidth:
    """Normal reference rule ``1.06 * min(sd, IQR/1.349) * n^(-1/5)``."""
    data = _sample_values(sample)
    if data.size < 2:
        raise ValueError("normal reference rule needs at least 2 observations")
    return FixedBandwidth(1.06 * _spread(data) * data.size ** -0.2)


def _phi4(u):
    u2 = u * u
    return (u2 * u2 - 6.0 * u2 + 3.0) * std_normal_pdf(u)


def _phi6(u):
    u2 = u * u
    return (((u2 - 15.0) * u2 + 45.0) * u2 - 15.0) * std_normal_pdf(u)


def _density_functional(data: np.ndarray, g: float, order: int) -> float:
    """Kernel estimate of ``psi_r = int f^(r) f``, diagonal terms included."""
    deriv = _phi4 if order == 4 else _phi6
    n = data.size
    total = 0.0
    rows = max(1, _CHUNK // n)
    for lo in range(0, n, rows):
        block = (data[lo:lo + rows, None] - data[None, :]) / g
        total += float(deriv(block).sum())
    return total / (n * n * g ** (order + 1))


def bandwidth_sj_dpi(sample) -> FixedBandwidth:
    """Two-stage Sheather-Jones direct plug-in bandwidth (Gaussian kernel).

    The normal-scale value of ``psi_8`` gives the pilot for ``psi_6``, whose
    kernel estimate gives the pilot for ``psi_4``; the AMISE-optimal
    bandwidth follows from ``psi_4``.
    """
    data = _sample_values(sample)
    n = data.size
    if n < 10:
        raise ValueError(f"direct plug-in needs n >= 10, got {n}")
    scale = _spread(data)
    psi8 = 105.0 / (32.0 * math.sqrt(math.pi) * scale**9)
    g2 = (30.0 / (math.sqrt(2.0 * math.pi) * psi8 * n)) ** (1.0 / 9.0)
    psi6 = _density_functional(data, g2, 6)
    g1 = (-6.0 / (math.sqrt(2.0 * math.pi) * psi6 * n)) ** (1.0 / 7.0)
    psi4 = _density_functional(data, g1, 4)
    return FixedBandwidth((1.0 / (2.0 * math.sqrt(math.pi) * psi4 * n)) ** 0.2)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    bad = ~((grid > 0.0) & (grid < 1.0))
    if np.any(bad):
        raise DomainError(f"evaluation grid must lie inside (0, 1); offending points {grid[bad][:5].tolist()}")
    return grid


def renormalize(est: DensityEstimate) -> DensityEstimate:
    """Rescale an estimate to unit Simpson mass over its grid."""
    mass = est.mass()
    if not (math.isfinite(mass) and mass > 0):
        raise ValueError(f"cannot renormalize: grid mass is {mass}")
    meta = dict(est.metadata, mass_before_renorm=mass)
    return replace(est, values=est.values / mass, normalized=True, metadata=meta)


def conventional_kde(xs, h, grid) -> DensityEstimate:
    """Plain Gaussian KDE of the raw observations, evaluated on ``grid``."""
    data = _sample_values(xs)
    grid = np.asarray(grid, dtype=float)
    vals = kde_eval(data, h, grid)
    return DensityEstimate(grid, vals, "unit", False,
                           {"estimator": "conventional", "h": _as_h(h)})


def dai_sperlich_kde(xs, h, grid, renorm: bool = True) -> DensityEstimate:
    """Simple boundary correction: local bandwidth ``min(h, x, 1 - x)``."""
    data = _sample_values(xs)
    grid = _check_grid(grid)
    hv = _as_h(h)
    hloc = np.minimum(hv, np.minimum(grid, 1.0 - grid))
    vals = kernel_sums(grid, data, hloc) / (data.size * hloc)
    est = DensityEstimate(grid, vals, "unit", False, {"estimator": "dai", "h": hv})
    return renormalize(est) if renorm else est


def naive_probit_estimate(xs, h, grid) -> DensityEstimate:
    """Gaussian KDE on the probit scale, back-transformed to (0, 1)."""
    data = _sample_values(xs)
    grid = _check_grid(grid)
    pseudo = std_normal_quantile(data)
    fs = kde_eval(pseudo, h, std_normal_quantile(grid))
    vals = back_transform_density(fs, grid)
    return DensityEstimate(grid, np.atleast_1d(vals), "unit", False,
                           {"estimator": "naive", "h": _as_h(h)})


def amendment_factor(x, h) -> np.ndarray:
    q = std_normal_quantile(x)
    return 1.0 + 0.5 * h * h * (np.square(q) - 1.0)


def amended_probit_estimate(xs, h, grid, renorm: bool = True) -> DensityEstimate:
    """Naive probit estimate divided by ``1 + h^2 (q^2 - 1) / 2``, ``q = Phi^{-1}(x)``.

    Bandwidths ``h >= sqrt(2)`` are refused: the factor is then
    non-positive at ``x = 0.5``.
    """
    hv = _as_h(h)
    if hv >= math.sqrt(2.0):
        raise DomainError(f"amended estimator requires h < sqrt(2), got {hv}")
    naive = naive_probit_estimate(xs, hv, grid)
    factor = amendment_factor(naive.grid, hv)
    if np.any(factor <= 0):
        raise DomainError(f"amendment factor non-positive at x={naive.grid[factor <= 0][0]}")
    est = DensityEstimate(naive.grid, naive.values / factor, "unit", False,
                          {"estimator": "amended", "h": hv})
    return renormalize(est) if renorm else est
