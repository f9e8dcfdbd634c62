"""Analytic test densities on (0, 1) with derivatives, CDF, quantile and sampler."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq
from scipy.special import betainc, betaincinv, betaln

from .errors import CapabilityError
from .probcore import SeedSpec, std_normal_cdf, std_normal_quantile

_TINY = 2.0**-1074


def open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws strictly inside (0, 1): midpoints of a 2^-52 lattice."""
    return (np.floor(rng.random(n) * 2.0**52) + 0.5) * 2.0**-52


@dataclass(frozen=True)
class TestDensity:
    """A density on (0, 1).

    ``derivatives[k - 1]`` is the k-th derivative of the pdf, or ``None`` when
    not available. ``draw(rng, n)`` produces a sample from a generator.
    """

    __test__ = False  # not a pytest class

    name: str
    pdf: Callable
    cdf: Callable
    quantile: Callable
    draw: Callable
    derivatives: Sequence = field(default=())
    unbounded_left: bool = False
    unbounded_right: bool = False
    zero_left: bool = False
    zero_right: bool = False

    def derivative(self, x, order: int):
        if order == 0:
            return self.pdf(x)
        if order > len(self.derivatives) or self.derivatives[order - 1] is None:
            raise CapabilityError(f"{self.name}: derivative of order {order} not available")
        return self.derivatives[order - 1](x)

    def sample(self, n: int, seed: SeedSpec) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be positive")
        return self.draw(seed.rng(), n)

    @property
    def bounded(self) -> bool:
        return not (self.unbounded_left or self.unbounded_right)


def _beta_logderiv(a: float, b: float, x, k: int):
    fact = math.factorial(k - 1)
    return (a - 1.0) * (-1.0) ** (k - 1) * fact / x**k - (b - 1.0) * fact / (1.0 - x) ** k


def beta(a: float, b: float, name: str | None = None) -> TestDensity:
    """Beta(a, b); derivatives from the derivatives ``g_k`` of the log-density."""
    lognorm = betaln(a, b)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - lognorm)

    def deriv(k):
        def f(x):
            x = np.asarray(x, dtype=float)
            g = [_beta_logderiv(a, b, x, j) for j in range(1, k + 1)]
            # complete Bell polynomials in g1..g4
            if k == 1:
                poly = g[0]
            elif k == 2:
                poly = g[0] ** 2 + g[1]
            elif k == 3:
                poly = g[0] ** 3 + 3 * g[0] * g[1] + g[2]
            else:
                poly = g[0] ** 4 + 6 * g[0] ** 2 * g[1] + 4 * g[0] * g[2] + 3 * g[1] ** 2 + g[3]
            return pdf(x) * poly
        return f

    return TestDensity(
        name=name or f"beta({a:g},{b:g})",
        pdf=pdf,
        cdf=lambda x: betainc(a, b, np.asarray(x, dtype=float)),
        quantile=lambda p: betaincinv(a, b, np.asarray(p, dtype=float)),
        draw=lambda rng, n: betaincinv(a, b, open_uniform(rng, n)),
        derivatives=tuple(deriv(k) for k in range(1, 5)),
        unbounded_left=a < 1, unbounded_right=b < 1,
        zero_left=a > 1, zero_right=b > 1,
    )


def mixture(weights: Sequence[float], parts: Sequence[TestDensity], name: str) -> TestDensity:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0):
        raise ValueError("mixture weights must be non-negative and sum to 1")
    cw = np.cumsum(w)

    def combine(attr_fn):
        return lambda x: sum(wi * attr_fn(d)(x) for wi, d in zip(w, parts))

    def cdf(x):
        return sum(wi * d.cdf(x) for wi, d in zip(w, parts))

    def quantile(p):
        p = np.asarray(p, dtype=float)
        out = np.array([brentq(lambda x: cdf(x) - pi, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
                        for pi in p.ravel()])
        return out.reshape(p.shape) if p.ndim else float(out[0])

    def draw(rng, n):
        comp = np.searchsorted(cw, rng.random(n), side="right")
        comp = np.minimum(comp, len(parts) - 1)
        out = np.empty(n)
        for j, d in enumerate(parts):
            idx = np.flatnonzero(comp == j)
            if idx.size:
                out[idx] = d.draw(rng, idx.size)
        return out

    derivs = tuple(combine(lambda d, k=k: (lambda x: d.derivative(x, k))) for k in range(1, 5))
    return TestDensity(
        name=name, pdf=combine(lambda d: d.pdf), cdf=cdf, quantile=quantile, draw=draw,
        derivatives=derivs,
        unbounded_left=any(d.unbounded_left for d in parts),
        unbounded_right=any(d.unbounded_right for d in parts),
        zero_left=all(d.zero_left for d in parts),
        zero_right=all(d.zero_right for d in parts),
    )


def probit_normal(mu: float, sigma: float, name: str | None = None) -> TestDensity:
    """Density of ``Phi(mu + sigma Z)``: its probit image is exactly N(mu, sigma^2).

    With ``q = Phi^{-1}(x)`` the pdf is ``exp(L(q))`` where
    ``L(q) = -log sigma - (q - mu)^2 / (2 sigma^2) + q^2 / 2``. Since
    ``dq/dx = sqrt(2 pi) exp(q^2 / 2)``, the k-th derivative has the form
    ``(2 pi)^(k/2) P_k(q) exp(L(q) + k q^2 / 2)`` with ``P_0 = 1`` and
    ``P_{k+1} = P_k' + P_k (L' + k q)``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    q_ = Polynomial([0.0, 1.0])
    dL = -(q_ - mu) / sigma**2 + q_
    polys = [Polynomial([1.0])]
    for k in range(4):
        polys.append(polys[k].deriv() + polys[k] * (dL + k * q_))

    def log_base(q):
        return -math.log(sigma) - (q - mu) ** 2 / (2.0 * sigma**2) + q * q / 2.0

    def pdf(x):
        q = std_normal_quantile(x)
        return np.exp(log_base(q))

    def deriv(k):
        def f(x):
            q = std_normal_quantile(x)
            return (2.0 * math.pi) ** (k / 2.0) * polys[k](q) * np.exp(log_base(q) + k * q * q / 2.0)
        return f

    # exponent of the pdf behaves like (1 - 1/sigma^2) q^2 / 2 + mu q / sigma^2
    grow = 1.0 - 1.0 / sigma**2
    up_right = grow > 0 or (grow == 0 and mu > 0)
    up_left = grow > 0 or (grow == 0 and mu < 0)
    down_right = grow < 0 or (grow == 0 and mu < 0)
    down_left = grow < 0 or (grow == 0 and mu > 0)
    return TestDensity(
        name=name or f"probit-normal({mu:g},{sigma:g})",
        pdf=pdf,
        cdf=lambda x: std_normal_cdf((std_normal_quantile(x) - mu) / sigma),
        quantile=lambda p: std_normal_cdf(mu + sigma * std_normal_quantile(p)),
        draw=lambda rng, n: np.clip(std_normal_cdf(mu + sigma * rng.standard_normal(n)),
                                    _TINY, 1.0 - 2.0**-53),
        derivatives=tuple(deriv(k) for k in range(1, 5)),
        unbounded_left=up_left, unbounded_right=up_right,
        zero_left=down_left, zero_right=down_right,
    )


def gaussian_copula_conditional(rho: float, u0: float) -> TestDensity:
    """Conditional density of ``U`` given ``U0 = u0`` under a Gaussian copula.

    The probit image is N(rho Phi^{-1}(u0), 1 - rho^2).
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    mu = rho * std_normal_quantile(u0)
    return probit_normal(mu, math.sqrt(1.0 - rho * rho), name=f"gcc({rho:g},{u0:g})")


def uniform() -> TestDensity:
    return TestDensity(
        name="uniform",
        pdf=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        cdf=lambda x: np.asarray(x, dtype=float),
        quantile=lambda p: np.asarray(p, dtype=float),
        draw=lambda rng, n: open_uniform(rng, n),
        derivatives=tuple((lambda x: np.zeros_like(np.asarray(x, dtype=float))) for _ in range(4)),
    )


_GCC = re.compile(r"^gcc\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)$")


def catalog() -> dict[str, TestDensity]:
    """The standard benchmark densities, keyed by name."""
    return {
        "uniform": uniform(),
        "beta44": beta(4.0, 4.0, "beta44"),
        "beta25": beta(2.0, 5.0, "beta25"),
        "beta0505": beta(0.5, 0.5, "beta0505"),
        "bimodal": mixture([0.5, 0.5], [beta(3.0, 9.0), beta(9.0, 3.0)], "bimodal"),
        "gcc": gaussian_copula_conditional(0.6, 0.8),
    }


def get_density(name: str) -> TestDensity:
    """Catalogue lookup; ``gcc(rho,u0)`` builds a copula-conditional entry."""
    m = _GCC.match(name.strip())
    if m:
        return gaussian_copula_conditional(float(m.group(1)), float(m.group(2)))
    cat = catalog()
    if name not in cat:
        raise KeyError(f"unknown density {name!r}; known: {sorted(cat)} or gcc(rho,u0)")
    return cat[name]
