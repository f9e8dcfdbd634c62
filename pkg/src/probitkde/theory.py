"""Leading-order bias and variance of the estimators as executable formulas.

Every function takes a density object exposing ``pdf(x)`` and
``derivative(x, k)`` (see :class:`probitkde.densities.TestDensity`) and
returns the leading asymptotic term; higher-order remainders are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from numpy.polynomial import Polynomial

from .errors import CapabilityError
from .probcore import std_normal_cdf, std_normal_pdf, std_normal_quantile

SQRT_PI = math.sqrt(math.pi)
INFLATION_T2 = 27.0 / 16.0
H0_REFERENCE = 2.5679

TAGS = ("naive", "amended", "gc", "t1", "t2", "t1knn", "t2knn")


def fS_derivatives(d, s: float, order: int) -> float:
    """Derivative of ``f_S(s) = f_X(Phi(s)) phi(s)`` of order 1 to 4.

    Each term of the expansion is ``f_X^(j)(Phi(s)) phi(s)^a P(s)`` for a
    polynomial ``P``; differentiating one term gives
    ``f_X^(j+1) phi^(a+1) P + f_X^(j) phi^a (P' - a s P)``.

    Raises
    ------
    CapabilityError
        If ``d`` lacks a derivative the expansion needs.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"order must be 1..4, got {order}")
    terms = {(0, 1): Polynomial([1.0])}
    for _ in range(order):
        nxt: dict = {}
        for (j, a), poly in terms.items():
            for key, add in (((j + 1, a + 1), poly),
                             ((j, a), poly.deriv() - a * Polynomial([0.0, 1.0]) * poly)):
                nxt[key] = nxt[key] + add if key in nxt else add
        terms = nxt
    x = std_normal_cdf(s)
    phi = std_normal_pdf(s)
    total = 0.0
    for (j, a), poly in terms.items():
        if not np.any(poly.coef):
            continue
        total += float(d.derivative(x, j)) * phi**a * float(poly(s))
    return total


def _jet(d, x: float, upto: int):
    f = [float(d.pdf(x))]
    for k in range(1, upto + 1):
        f.append(float(d.derivative(x, k)))
    return f


@dataclass(frozen=True)
class AsymptoticProfile:
    """Leading bias ``b(x, h)`` and variance ``v(x, n, param)`` of one estimator.

    ``param`` is the bandwidth ``h`` for fixed-bandwidth tags and the
    neighbour fraction ``alpha`` for the nearest-neighbour tags.
    """

    tag: str
    bias: Callable[[float, float], float]
    variance: Callable[[float, int, float], float]

    def leading_bias(self, x: float, h: float) -> float:
        return self.bias(x, h)

    def leading_variance(self, x: float, n: int, param: float) -> float:
        return self.variance(x, n, param)


def _unavailable(what: str):
    def f(*_):
        raise CapabilityError(what)
    return f


def asymptotic_profile(tag: str, d) -> AsymptoticProfile:
    """Leading-term formulas for estimator ``tag`` under density ``d``.

    Tags: ``naive`` and ``amended`` (kernel estimate on the probit scale,
    without and with the amendment factor), ``gc`` (bias of the Gaussian
    copula kernel estimator), ``t1``/``t2`` (local log-linear / log-quadratic
    on the probit scale, fixed ``h``) and ``t1knn``/``t2knn`` (the same with a
    nearest-neighbour bandwidth; variance only).
    """
    if tag not in TAGS:
        raise ValueError(f"unknown estimator tag {tag!r}; expected one of {TAGS}")

    def setup(x):
        q = std_normal_quantile(x)
        return q, std_normal_pdf(q)

    def var_fixed(c):
        def v(x, n, h):
            q, ph = setup(x)
            return c * float(d.pdf(x)) / (2.0 * n * h * ph * SQRT_PI)
        return v

    def var_knn(c):
        def v(x, n, alpha):
            return c * float(d.pdf(x)) ** 2 / (n * alpha * SQRT_PI)
        return v

    def bias_naive(x, h):
        q, ph = setup(x)
        f, f1, f2 = _jet(d, x, 2)
        return 0.5 * h * h * (f2 * ph**2 - 3.0 * f1 * q * ph + (q * q - 1.0) * f)

    def bias_amended(x, h):
        q, ph = setup(x)
        _, f1, f2 = _jet(d, x, 2)
        return 0.5 * h * h * (f2 * ph**2 - 3.0 * f1 * q * ph)

    def bias_gc(x, h):
        q, ph = setup(x)
        _, f1, f2 = _jet(d, x, 2)
        return 0.5 * h * h * (2.0 * f2 * ph**2 - 4.0 * f1 * q * ph)

    def bias_t1(x, h):
        q, ph = setup(x)
        f, f1, f2 = _jet(d, x, 2)
        return 0.5 * h * h * ((f2 - f1 * f1 / f) * ph**2 - f1 * q * ph - f)

    def bias_t2(x, h):
        q, ph = setup(x)
        f, f1, f2, f3, f4 = _jet(d, x, 4)
        q2 = q * q
        brace = ((f4 - 3.0 * f2 * f2 / f + 2.0 * f1**4 / f**3) * ph**4
                 + 2.0 * (9.0 * f1 * f2 / f - 4.0 * f1**3 / f**2 - 5.0 * f3) * q * ph**3
                 + ((19.0 * q2 - 4.0) * f2 - 15.0 * q2 * f1 * f1 / f) * ph**2
                 + (7.0 * q - 5.0 * q * q2) * f1 * ph)
        return -0.125 * h**4 * brace

    no_knn_bias = _unavailable("no leading bias formula for nearest-neighbour bandwidths")
    table = {
        "naive": (bias_naive, var_fixed(1.0)),
        "amended": (bias_amended, var_fixed(1.0)),
        "gc": (bias_gc, _unavailable("variance of the copula kernel estimator is not provided")),
        "t1": (bias_t1, var_fixed(1.0)),
        "t2": (bias_t2, var_fixed(INFLATION_T2)),
        "t1knn": (no_knn_bias, var_knn(1.0)),
        "t2knn": (no_knn_bias, var_knn(INFLATION_T2)),
    }
    b, v = table[tag]
    return AsymptoticProfile(tag, b, v)


def probit_scale_bias(tag: Literal["t1", "t2"], d, x: float, h: float) -> float:
    """Leading bias of the local fits written on the probit scale and mapped back.

    ``t1``: ``h^2/2 (f_S'' - f_S'^2 / f_S)``; ``t2``:
    ``-h^4/8 f_S ((log f_S)'''' + 4 (log f_S)''' (log f_S)')``, both divided
    by ``phi(Phi^{-1}(x))``. Serves as a cross-check of the X-scale formulas.
    """
    s = std_normal_quantile(x)
    fs = float(d.pdf(x)) * std_normal_pdf(s)
    g = [fS_derivatives(d, s, k) / fs for k in range(1, 5)]
    if tag == "t1":
        b = 0.5 * h * h * fs * (g[1] - g[0] ** 2)
    elif tag == "t2":
        # derivatives of log f_S from the ratios f_S^(k) / f_S
        l1 = g[0]
        l3 = g[2] - 3.0 * g[0] * g[1] + 2.0 * g[0] ** 3
        l4 = g[3] - 4.0 * g[0] * g[2] - 3.0 * g[1] ** 2 + 12.0 * g[0] ** 2 * g[1] - 6.0 * g[0] ** 4
        b = -0.125 * h**4 * fs * (l4 + 4.0 * l3 * l1)
    else:
        raise ValueError("tag must be 't1' or 't2'")
    return b / std_normal_pdf(s)


@dataclass(frozen=True)
class BoundarySequenceSpec:
    """Points ``x_n`` approaching a boundary with ``x_n / h^m -> eta``."""

    side: Literal["left", "right"]
    m: float
    eta: float

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        if not (self.m > 0 and self.eta > 0):
            raise ValueError("m and eta must be positive")

    def point(self, h: float) -> float:
        dist = self.eta * h**self.m
        return dist if self.side == "left" else 1.0 - dist


def boundary_orders(tag: str, d, spec: BoundarySequenceSpec, h: float, n: int):
    """Magnitudes of the naive estimator's bias and variance along ``x_n``.

    Bias order is ``m h^2 log(1/h) f_X(x_n)``; the unspecified constant in
    front is left out. Variance order is
    ``f_X(x_n) / (n h^(1 + 2m) sqrt(2) eta^2)``.
    """
    if tag != "naive":
        raise CapabilityError(f"boundary orders are defined for the naive estimator only, not {tag!r}")
    x = spec.point(h)
    if not 0.0 < x < 1.0:
        raise ValueError(f"boundary point {x} is outside (0, 1); decrease eta or h")
    f = float(d.pdf(x))
    bias = spec.m * h * h * math.log(1.0 / h) * f
    var = f / (n * h ** (1.0 + 2.0 * spec.m) * math.sqrt(2.0) * spec.eta**2)
    return bias, var


class _PointJet:
    """Constant density jet used to read off formula coefficients."""

    def __init__(self, values):
        self.values = values

    def pdf(self, x):
        return self.values[0]

    def derivative(self, x, k):
        return self.values[k]


@dataclass(frozen=True)
class MidpointMultipliers:
    """Constants of the mean squared error trade-off at ``x = 1/2``.

    With ``bias ~ b f'' h^2`` and ``variance ~ v f / (n h)``,
    ``mse_multiplier`` is ``(5/4) (b^2)^(1/5) v^(4/5)``, i.e. ``5/4`` times
    the customary multiplier ``(64 pi^2)^(-1/5)``. ``h0 = (v / b^2)^(1/5)`` is
    the bandwidth multiplier in the same convention and reproduces the quoted
    ``h0_reference``. The minimiser of ``(b h^2)^2 + v / h`` itself is
    ``(v / (4 b^2))^(1/5)`` (``optimal_h_constant``) and its minimum is
    ``4^(1/5) mse_multiplier`` (``exact_mse_constant``).
    """

    mse_multiplier: float
    h0_reference: float
    h0: float
    bias_coefficient: float
    variance_coefficient: float
    optimal_h_constant: float
    exact_mse_constant: float


def midpoint_multipliers() -> MidpointMultipliers:
    """Multipliers of the amended estimator."""
    prof = asymptotic_profile("amended", _PointJet([1.0, 0.0, 1.0]))
    b = prof.leading_bias(0.5, 1.0)
    v = prof.leading_variance(0.5, 1, 1.0)
    mult = 1.25 * (b * b) ** 0.2 * v**0.8
    h_const = (v / (4.0 * b * b)) ** 0.2
    exact = (b * h_const**2) ** 2 + v / h_const
    return MidpointMultipliers(mult, H0_REFERENCE, (v / (b * b)) ** 0.2, b, v, h_const, exact)


def local_bandwidth_equivalent(x, h):
    """Bandwidth ``h phi(Phi^{-1}(x))`` the naive estimator effectively uses at ``x``."""
    return h * std_normal_pdf(std_normal_quantile(x))
