"""One entry point from a method description to a fitted density estimate."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .bwselect import WeightScheme, select
from .classic import (DensityEstimate, FixedBandwidth, amended_probit_estimate,
                      bandwidth_sj_dpi, conventional_kde, dai_sperlich_kde,
                      naive_probit_estimate)
from .loclik import EstimatorSpec, KnnBandwidth, estimate_density
from .probcore import std_normal_quantile
from .transform import BoundaryPolicy, UnitSample

CLASSIC = ("conventional", "dai", "naive", "amended")
LOCAL = ("t1", "t2", "raw1", "raw2")
METHODS = CLASSIC + LOCAL
SELECTORS = ("none", "lscv", "wlscv1", "wlscv2")
RENORMALIZED = ("dai", "amended", "t1", "t2")

_ID = re.compile(r"^(t1|t2|raw1|raw2)-(h|knn)-(lscv|wlscv1|wlscv2)$")


@dataclass(frozen=True)
class MethodSpec:
    """What to estimate and how to pick its smoothing parameter.

    Classic methods take ``h`` or fall back to the direct plug-in bandwidth
    (on the raw data for ``conventional``/``dai``, on the probit scale for
    ``naive``/``amended``). Local-likelihood methods use ``h``/``alpha``
    when ``select == "none"`` and cross-validation otherwise.
    """

    method: str = "t2"
    bandwidth: str = "knn"
    select: str = "wlscv1"
    h: float | None = None
    alpha: float | None = None
    weight_convention: str = "sec4"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.bandwidth not in ("fixed", "knn"):
            raise ValueError(f"bandwidth must be 'fixed' or 'knn', got {self.bandwidth!r}")
        if self.select not in SELECTORS:
            raise ValueError(f"unknown selector {self.select!r}; expected one of {SELECTORS}")
        if self.method in LOCAL:
            if self.select == "none":
                need = "h" if self.bandwidth == "fixed" else "alpha"
                if getattr(self, need) is None:
                    raise ValueError(f"--select none with {self.bandwidth} bandwidth needs --{need}")
            if self.method.startswith("raw") and self.select.startswith("wlscv"):
                raise ValueError("weighted cross-validation is defined for t1/t2 only")

    @classmethod
    def parse(cls, ident: str, weight_convention: str = "sec4") -> "MethodSpec":
        """Parse ``conventional``, ``naive``, ... or ``t2-knn-wlscv1``-style ids."""
        if ident in CLASSIC:
            return cls(ident, "fixed", "none", weight_convention=weight_convention)
        m = _ID.match(ident)
        if not m:
            raise ValueError(f"unknown estimator id {ident!r}")
        bw = "fixed" if m.group(2) == "h" else "knn"
        return cls(m.group(1), bw, m.group(3), weight_convention=weight_convention)

    @property
    def name(self) -> str:
        if self.method in CLASSIC:
            return self.method
        return f"{self.method}-{'h' if self.bandwidth == 'fixed' else 'knn'}-{self.select}"

    def estimator_spec(self, param: float) -> EstimatorSpec:
        family = "raw" if self.method.startswith("raw") else "probit"
        bw = FixedBandwidth(param) if self.bandwidth == "fixed" else KnnBandwidth(param)
        return EstimatorSpec(family, int(self.method[-1]), bw)


@dataclass
class Fitted:
    estimate: DensityEstimate
    parameter: float
    selection: object = None


def fit_method(spec: MethodSpec, xs, grid, policy: BoundaryPolicy | None = None,
               threads: int = 1) -> Fitted:
    if not isinstance(xs, UnitSample):
        xs = UnitSample.from_values(xs, policy)
    grid = np.asarray(grid, dtype=float)
    renorm = spec.method in RENORMALIZED
    if spec.method in CLASSIC:
        if spec.h is not None:
            h = spec.h
        elif spec.method in ("conventional", "dai"):
            h = bandwidth_sj_dpi(xs.values).h
        else:
            h = bandwidth_sj_dpi(std_normal_quantile(xs.values)).h
        if spec.method == "conventional":
            est = conventional_kde(xs, h, grid)
        elif spec.method == "dai":
            est = dai_sperlich_kde(xs, h, grid, renorm=renorm)
        elif spec.method == "naive":
            est = naive_probit_estimate(xs, h, grid)
        else:
            est = amended_probit_estimate(xs, h, grid, renorm=renorm)
        return Fitted(est, h)

    selection = None
    if spec.select == "none":
        param = spec.h if spec.bandwidth == "fixed" else spec.alpha
    else:
        template = spec.estimator_spec(0.5)
        data = xs.values if template.family == "raw" else std_normal_quantile(xs.values)
        scheme = WeightScheme(spec.select.upper(), spec.weight_convention)
        selection = select(template, data, scheme, threads=threads)
        param = selection.parameter
    est = estimate_density(xs, spec.estimator_spec(param), grid, renorm=renorm)
    est.metadata["estimator"] = spec.name
    if selection is not None:
        est.metadata["scheme"] = spec.select
        est.metadata["weight_convention"] = spec.weight_convention
        est.metadata["criterion"] = selection.criterion_value
    return Fitted(est, param, selection)
