"""Numerical checks of the rational-function identities behind the symmetrised formulas.

Each check works at explicit points and reports a relative residual, so
the identities can be exercised far from any quadrature grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from .model import ModelParams, PoleError, _check_denominator, f_denominator, f_factor

MAX_PERM_K = 9
POLE_GAP = 1e-3
# working precision for determinants; float64 LU loses about 8 digits at k = 6
DET_DPS = 40


def _as_points(xi) -> np.ndarray:
    arr = np.asarray(xi, dtype=complex).reshape(-1)
    if arr.size == 0:
        raise ValueError("need at least one point")
    return arr


def _relative(a: complex, b: complex) -> float:
    scale = abs(b)
    return abs(a - b) / scale if scale > 0 else abs(a - b)


# ---------------------------------------------------------------------------
# permutation sum against its closed form


def lemma32_lhs(xi: Sequence[complex], params: ModelParams) -> complex:
    """Sum over all ``k!`` orderings of the nested-product expression.

    For an ordering ``s`` the summand is
    ``prod_{i>j} (p + q s_i s_j - s_i)/(s_j - s_i)`` divided by
    ``prod_l (s_l^2 ... s_k^2 - tau^(k-l+1))``.
    """
    xi = _as_points(xi)
    k = xi.size
    if k > MAX_PERM_K:
        raise ValueError(f"permutation sum limited to k <= {MAX_PERM_K}, got {k}")
    tau = params.tau
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    s = xi[perms]
    num = np.ones(len(perms), dtype=complex)
    den = np.ones(len(perms), dtype=complex)
    for i in range(k):
        for j in range(i):
            num *= f_denominator(s[:, i], s[:, j], params)
            den *= s[:, j] - s[:, i]
    # suffix products s_l^2 ... s_k^2
    suffix = np.cumprod((s**2)[:, ::-1], axis=1)[:, ::-1]
    nested = suffix - tau ** np.arange(k, 0, -1)
    _check_denominator(den, 1.0, "coincident points")
    _check_denominator(nested, 1.0, "nested product denominator")
    vals = num / den / np.prod(nested, axis=1)
    return complex(math.fsum(vals.real), math.fsum(vals.imag))


def lemma32_rhs(xi: Sequence[complex], params: ModelParams) -> complex:
    """Closed form ``(1+tau)^(-k(k-1)/2) prod_{i<j} (1+tau-xi_i-xi_j)/(tau-xi_i xi_j) prod_i 1/(xi_i^2-tau)``."""
    xi = _as_points(xi)
    k = xi.size
    tau = params.tau
    out = complex((1.0 + tau) ** (-k * (k - 1) / 2))
    for i in range(k):
        for j in range(i + 1, k):
            d = tau - xi[i] * xi[j]
            _check_denominator(d, 1.0, "tau - xi_i xi_j")
            out *= (1.0 + tau - xi[i] - xi[j]) / d
    sq = xi**2 - tau
    _check_denominator(sq, 1.0, "xi^2 - tau")
    return complex(out / np.prod(sq))


def lemma32_residual(xi: Sequence[complex], params: ModelParams) -> float:
    return _relative(lemma32_lhs(xi, params), lemma32_rhs(xi, params))


# ---------------------------------------------------------------------------
# Cauchy-type determinant


def lemma31_sides(xi: Sequence[complex], params: ModelParams) -> tuple[complex, complex]:
    xi = _as_points(xi)
    k = xi.size
    p, q, tau = params.p, params.q, params.tau
    den = f_denominator(xi[:, None], xi[None, :], params)
    _check_denominator(den, 1.0, "matrix entry denominator")
    with mpmath.workdps(DET_DPS):
        mp_xi = [mpmath.mpc(z) for z in xi]
        mat = mpmath.matrix(k, k)
        for i in range(k):
            for j in range(k):
                mat[i, j] = 1 / (p + q * mp_xi[i] * mp_xi[j] - mp_xi[i])
        lhs = complex(mpmath.det(mat))
    rhs = complex((-1.0) ** k * (p * q) ** (k * (k - 1) / 2) * q ** (-k))
    for i in range(k):
        for j in range(k):
            if i != j:
                rhs *= f_factor(xi[i], xi[j], params)
    ends = (1.0 - xi) * (xi - tau)
    _check_denominator(ends, 1.0, "(1 - xi)(xi - tau)")
    return lhs, complex(rhs / np.prod(ends))


def lemma31_check(xi: Sequence[complex], params: ModelParams) -> float:
    """Relative residual of ``det[1/(p + q xi_i xi_j - xi_i)]`` against its product form."""
    lhs, rhs = lemma31_sides(xi, params)
    return _relative(lhs, rhs)


# ---------------------------------------------------------------------------
# the one-step recursion and its residue function


def recursion_sides(xi: Sequence[complex], params: ModelParams) -> tuple[complex, complex]:
    """Both sides of ``(prod xi^2 - tau^k)/(1+tau)^(k-1) = sum_l (xi_l^2 - tau) prod_{i!=l} ...``."""
    xi = _as_points(xi)
    k = xi.size
    tau = params.tau
    lhs = (np.prod(xi**2) - tau**k) / (1.0 + tau) ** (k - 1)
    rhs = 0j
    for l in range(k):
        term = xi[l] ** 2 - tau
        for i in range(k):
            if i == l:
                continue
            d1 = xi[l] - xi[i]
            d2 = 1.0 + tau - xi[l] - xi[i]
            _check_denominator(d1 * d2, 1.0, "recursion denominator")
            term *= f_denominator(xi[i], xi[l], params) / d1 * (tau - xi[l] * xi[i]) / d2
        rhs += term
    return complex(lhs), complex(rhs)


def g_function(z, xi: Sequence[complex], params: ModelParams):
    """Residue function whose poles carry the recursion terms; vectorised in ``z``."""
    xi = _as_points(xi)
    p, q, tau = params.p, params.q, params.tau
    z = np.asarray(z, dtype=complex)
    out = (2.0 * z - 1.0 - tau) / ((z - 1.0) * (q * z - p))
    for x in xi:
        out = out * (p + q * x * z - x) / (z - x) * (tau - z * x) / (1.0 + tau - z - x)
    return out


def g_poles(xi: Sequence[complex], params: ModelParams) -> np.ndarray:
    xi = _as_points(xi)
    tau = params.tau
    return np.concatenate([[1.0, tau], xi, 1.0 + tau - xi]).astype(complex)


def circle_integral(fn, center: complex, radius: float, nodes: int = 256) -> complex:
    """``(2 pi i)^{-1}`` times the integral of ``fn`` around a circle, by the trapezoid rule."""
    w = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    vals = fn(center + w) * w
    return complex(vals.mean())


def _isolating_radius(center: complex, poles: np.ndarray) -> float:
    gaps = np.abs(poles - center)
    gaps = gaps[gaps > 0]
    return 0.5 * float(gaps.min())


@dataclass(frozen=True)
class ResidueReport:
    recursion: float
    large_circle: float
    residue_one: float
    residue_tau: float

    @property
    def worst(self) -> float:
        return max(self.recursion, self.large_circle, self.residue_one, self.residue_tau)


def residue_report(xi: Sequence[complex], params: ModelParams, nodes: int = 256) -> ResidueReport:
    xi = _as_points(xi)
    k = xi.size
    p, q, tau = params.p, params.q, params.tau
    if abs(1.0 - tau) < POLE_GAP:
        raise PoleError("the poles at 1 and tau merge when p = 1/2")
    lhs, rhs = recursion_sides(xi, params)
    poles = g_poles(xi, params)

    def g(z):
        return g_function(z, xi, params)

    big = 10.0 * float(np.abs(poles).max())
    total = circle_integral(g, 0.0, big, nodes)
    expected_total = 2.0 * q ** (k - 1) * np.prod(xi**2)
    res_one = circle_integral(g, 1.0, _isolating_radius(1.0, poles), nodes)
    res_tau = circle_integral(g, tau, _isolating_radius(tau, poles), nodes)
    return ResidueReport(
        recursion=_relative(rhs, lhs),
        large_circle=_relative(total, expected_total),
        residue_one=_relative(res_one, p**k / q),
        residue_tau=_relative(res_tau, p**k / q),
    )


def residue_identity_check(xi: Sequence[complex], params: ModelParams) -> float:
    """Largest relative residual among the recursion and the contour checks of ``g``."""
    return residue_report(xi, params).worst


# ---------------------------------------------------------------------------
# test points


def _near_pole(xi: np.ndarray, params: ModelParams, gap: float) -> bool:
    tau = params.tau
    k = xi.size
    singles = np.concatenate([xi - 1.0, xi - tau, xi**2 - tau, params.q * xi - params.p])
    if np.any(np.abs(singles) < gap):
        return True
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            if min(abs(xi[i] - xi[j]), abs(f_denominator(xi[i], xi[j], params)),
                   abs(tau - xi[i] * xi[j]), abs(1.0 + tau - xi[i] - xi[j])) < gap:
                return True
    # every partial product that can appear in the nested denominators
    for n in range(1, k + 1):
        for sub in itertools.combinations(range(k), n):
            if abs(np.prod(xi[list(sub)] ** 2) - tau**n) < gap * tau**n:
                return True
    return False


def random_points(
    k: int,
    rng: np.random.Generator,
    params: ModelParams,
    radii: tuple[float, float] = (2.0, 4.0),
    gap: float = POLE_GAP,
    max_tries: int = 1000,
) -> np.ndarray:
    """``k`` points with radii uniform in ``radii`` and jittered equispaced angles, kept clear of poles."""
    for _ in range(max_tries):
        r = rng.uniform(*radii, size=k)
        theta = 2.0 * np.pi * (np.arange(k) + rng.uniform(-0.35, 0.35, size=k)) / k
        xi = r * np.exp(1j * (theta + rng.uniform(0.0, 2.0 * np.pi)))
        xi = xi[rng.permutation(k)]
        if not _near_pole(xi, params, gap):
            return xi
    raise RuntimeError("could not draw pole-free points")


SUITES = {
    "lemma32": lemma32_residual,
    "lemma31": lemma31_check,
    "residue": residue_identity_check,
}


def max_residuals(suite: str, kmax: int, trials: int, params: ModelParams, seed: int = 0, kmin: int = 1) -> dict[int, float]:
    """Largest residual over ``trials`` random point sets for each ``k`` in ``kmin..kmax``."""
    check = SUITES[suite]
    rng = np.random.default_rng(seed)
    out = {}
    for k in range(kmin, kmax + 1):
        out[k] = max(check(random_points(k, rng, params), params) for _ in range(trials))
    return out
