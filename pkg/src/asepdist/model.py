"""Model parameters, initial conditions and the elementary Bethe-ansatz factors.

All scalar functions accept Python complex numbers or numpy arrays and
broadcast elementwise, so the same code serves point evaluations in tests
and vectorised evaluation on quadrature grids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PoleError(ArithmeticError):
    """A denominator vanished: the evaluation point sits on a pole."""


# relative size below which a denominator is treated as an exact zero
POLE_EPS = 1e-13


def _check_denominator(den, scale=1.0, what="denominator"):
    den_abs = np.abs(den)
    if np.any(den_abs <= POLE_EPS * np.maximum(scale, 1.0)):
        raise PoleError(f"{what} vanishes")


@dataclass(frozen=True)
class ModelParams:
    """Hop rates of the exclusion process.

    Only ``p`` (rate of a right jump) is stored; ``q = 1 - p`` is derived so
    the pair always sums to one.
    """

    p: float
    q: float = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 <= p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {p}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", 1.0 - p)
        object.__setattr__(self, "tau", p / (1.0 - p))

    def require_positive_p(self):
        if self.p == 0.0:
            raise ValueError("this formula divides by tau and needs p > 0")

    def swapped(self) -> "ModelParams":
        """Parameters of the mirror-image process (left and right rates exchanged)."""
        return ModelParams(self.q)


# ---------------------------------------------------------------------------
# initial conditions


@dataclass(frozen=True)
class FiniteSet:
    """A finite initial configuration ``Y`` split as ``Y_- | Y_+`` at ``split``.

    Sites ``y <= split`` form ``Y_-`` (integrated on the small circle), the
    rest form ``Y_+``.
    """

    sites: tuple[int, ...]
    split: int = 0

    def __post_init__(self):
        sites = tuple(int(y) for y in self.sites)
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError("initial sites must be strictly increasing")
        if not sites:
            raise ValueError("initial configuration is empty")
        object.__setattr__(self, "sites", sites)

    @property
    def minus(self) -> tuple[int, ...]:
        return tuple(y for y in self.sites if y <= self.split)

    @property
    def plus(self) -> tuple[int, ...]:
        return tuple(y for y in self.sites if y > self.split)


@dataclass(frozen=True)
class AlternatingZ:
    """Every odd site of the integer lattice occupied."""

    def sites_in(self, lo: int, hi: int) -> list[int]:
        return [y for y in range(lo, hi + 1) if y % 2 != 0]


@dataclass(frozen=True)
class OneSidedAlternating:
    """Sites ``2n - k0`` for ``n = 1, 2, ...`` occupied."""

    k0: int = 1

    def sites_in(self, lo: int, hi: int) -> list[int]:
        return [y for y in range(lo, hi + 1) if y >= 2 - self.k0 and (y + self.k0) % 2 == 0]


@dataclass(frozen=True)
class StepPositive:
    """Every positive site occupied."""

    def sites_in(self, lo: int, hi: int) -> list[int]:
        return list(range(max(lo, 1), hi + 1))


InitialCondition = FiniteSet | AlternatingZ | OneSidedAlternating | StepPositive


@dataclass(frozen=True)
class DistributionQuery:
    """Which probability ``P(X_m(t) <= x)`` to evaluate and to what accuracy."""

    m: int
    x: int
    t: float
    kmax: int = 8
    tol: float = 1e-9

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.kmax < 1:
            raise ValueError("kmax must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


# ---------------------------------------------------------------------------
# elementary factors


def epsilon(xi, params: ModelParams):
    """Single-particle eigenvalue ``p/xi + q*xi - 1``."""
    xi = np.asarray(xi, dtype=complex)
    if np.any(xi == 0):
        raise ZeroDivisionError("epsilon is undefined at xi = 0")
    out = params.p / xi + params.q * xi - 1.0
    return out[()] if out.ndim == 0 else out


def f_denominator(xi_i, xi_j, params: ModelParams):
    return params.p + params.q * xi_i * xi_j - xi_i


def f_factor(xi_i, xi_j, params: ModelParams, check=True):
    """Two-body scattering factor ``(xi_j - xi_i) / (p + q xi_i xi_j - xi_i)``."""
    xi_i = np.asarray(xi_i, dtype=complex)
    xi_j = np.asarray(xi_j, dtype=complex)
    den = f_denominator(xi_i, xi_j, params)
    if check:
        _check_denominator(den, np.abs(xi_i) * (1 + np.abs(xi_j)), "f-factor denominator")
    out = (xi_j - xi_i) / den
    return out[()] if out.ndim == 0 else out


def single_factor(x: int, xi, t: float, params: ModelParams):
    """One-variable weight ``xi**x * exp(eps(xi) t) / (1 - xi)``."""
    xi = np.asarray(xi, dtype=complex)
    _check_denominator(1.0 - xi, 1.0, "1 - xi")
    return xi**x * np.exp(epsilon(xi, params) * t) / (1.0 - xi)


def pair_product(xi, params: ModelParams, check=True):
    """``prod_{a<b} f(xi_a, xi_b)`` over the last axis, in tuple order."""
    xi = np.asarray(xi, dtype=complex)
    k = xi.shape[-1]
    out = np.ones(xi.shape[:-1], dtype=complex)
    for a in range(k):
        for b in range(a + 1, k):
            out = out * f_factor(xi[..., a], xi[..., b], params, check=check)
    return out


def i_weight(x: int, xi: Sequence[complex] | np.ndarray, t: float, params: ModelParams):
    """Bethe-ansatz weight ``prod_{a<b} f(xi_a, xi_b) prod_a xi_a^x e^{eps t}/(1-xi_a)``.

    The last axis of ``xi`` holds the variables; tuple position defines the
    ``a < b`` ordering of the pair product.
    """
    xi = np.asarray(xi, dtype=complex)
    out = pair_product(xi, params) * np.prod(single_factor(x, xi, t, params), axis=-1)
    return out[()] if out.ndim == 0 else out
