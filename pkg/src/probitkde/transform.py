"""The probit map between (0, 1) and the real line, for samples and densities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DomainError
from .probcore import std_normal_pdf, std_normal_quantile


@dataclass(frozen=True)
class BoundaryPolicy:
    """What to do with observations at (or beyond) 0 and 1.

    ``reject`` raises; ``clamp`` moves them to ``[epsilon, 1 - epsilon]``.
    """

    mode: Literal["reject", "clamp"] = "reject"
    epsilon: float = 1e-10

    def __post_init__(self):
        if self.mode not in ("reject", "clamp"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")


@dataclass(frozen=True)
class UnitSample:
    values: np.ndarray
    clamped: int = 0
    epsilon: float | None = None

    @classmethod
    def from_values(cls, xs, policy: BoundaryPolicy | None = None) -> "UnitSample":
        policy = policy or BoundaryPolicy()
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size == 0:
            raise ValueError("sample is empty")
        if not np.all(np.isfinite(xs)):
            raise DomainError(f"non-finite observations at indices {np.flatnonzero(~np.isfinite(xs)).tolist()}")
        outside = (xs <= 0.0) | (xs >= 1.0)
        if policy.mode == "reject":
            if np.any(outside):
                raise DomainError(
                    f"observations outside (0, 1) at indices {np.flatnonzero(outside).tolist()}")
            return cls(xs)
        eps = policy.epsilon
        clipped = np.clip(xs, eps, 1.0 - eps)
        return cls(clipped, clamped=int(np.count_nonzero(clipped != xs)), epsilon=eps)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PseudoSample:
    """Probit images ``S_i`` of a unit sample, stored sorted ascending."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("pseudo-sample must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise DomainError("pseudo-sample contains non-finite values")
        if np.any(np.diff(v) < 0):
            v = np.sort(v)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def to_pseudo_sample(xs, policy: BoundaryPolicy | None = None) -> PseudoSample:
    """Map observations on (0, 1) to the real line with ``S_i = Phi^{-1}(X_i)``."""
    if not isinstance(xs, UnitSample):
        xs = UnitSample.from_values(xs, policy)
    elif policy is not None and policy.mode == "clamp":
        xs = UnitSample.from_values(xs.values, policy)
    return PseudoSample(np.sort(std_normal_quantile(xs.values)))


def _check_open_unit(x):
    x = np.asarray(x, dtype=float)
    bad = ~((x > 0.0) & (x < 1.0))
    if np.any(bad):
        raise DomainError(f"x must lie in the open interval (0, 1); got {x[bad].ravel()[:5].tolist()}")
    return x


def back_transform_density(fs_value, x):
    """Density on (0, 1) from a density value on the probit scale.

    Returns ``fs_value / phi(Phi^{-1}(x))``.
    """
    x = _check_open_unit(x)
    fs_value = np.asarray(fs_value, dtype=float)
    if np.any(fs_value < 0):
        raise DomainError("density values must be non-negative")
    out = fs_value / std_normal_pdf(std_normal_quantile(x))
    return out if np.ndim(out) else float(out)


def forward_transform_density(fx_value, s):
    """``f_S(s) = f_X(Phi(s)) * phi(s)``."""
    out = np.asarray(fx_value, dtype=float) * std_normal_pdf(s)
    return out if np.ndim(out) else float(out)
