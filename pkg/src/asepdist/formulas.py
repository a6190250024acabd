"""Distribution of a tagged particle as series of contour integrals.

Conventions fixed here and used by every formula:

* each contour integral carries ``1/(2 pi i)``;
* variables attached to sites left of the split (negative indices) are
  integrated on the small circle ``|xi| = r`` and come first in the variable
  tuple, ordered ``xi_{-k_-}, ..., xi_{-1}``; positive-index variables follow
  on ``|xi| = R`` as ``xi_1, ..., xi_{k_+}``;
* the pair product ``prod_{a<b} f(xi_a, xi_b)`` runs over tuple positions.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .contour import ContourPlan, QuadratureNotConverged, integrate_tensor, plan_contours
from .model import (
    DistributionQuery,
    FiniteSet,
    ModelParams,
    PoleError,
    _check_denominator,
    epsilon,
    f_denominator,
    f_factor,
    i_weight,
    pair_product,
)
from .taucomb import enumerate_subsets, sigma_count, tau_binomial

log = logging.getLogger(__name__)

MAX_FINITE_SITES = 12


class SeriesNotConverged(RuntimeError):
    def __init__(self, msg, report: "SeriesReport"):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class TermIndex:
    k_minus: int
    k_plus: int

    @property
    def k(self) -> int:
        return self.k_minus + self.k_plus


@dataclass
class TermValue:
    index: TermIndex
    coefficient: float
    value: complex  # coefficient times integral
    est_error: float
    nodes: int
    converged: bool = True


@dataclass
class SeriesReport:
    """Outcome of a series evaluation.

    ``value`` is the real part of the raw sum clipped to ``[0, 1]``; the raw
    complex sum and every term are kept.
    """

    value: float
    raw: complex
    terms: list[TermValue] = field(default_factory=list)
    tail_bound: float = 0.0
    im_residual: float = 0.0
    converged: bool = True

    @property
    def est_error(self) -> float:
        return math.fsum(abs(tv.coefficient) * tv.est_error for tv in self.terms)

    def term(self, k_minus: int, k_plus: int) -> complex:
        for tv in self.terms:
            if tv.index == TermIndex(k_minus, k_plus):
                return tv.value
        return 0j

    @property
    def terms_used(self) -> int:
        return len(self.terms)


# ---------------------------------------------------------------------------
# geometric-series factors


def _suffix_products(xi):
    """``P[..., l] = xi_l * ... * xi_k`` along the last axis."""
    return np.flip(np.cumprod(np.flip(xi, axis=-1), axis=-1), axis=-1)


def phi_plus(xi_plus, params: ModelParams):
    """``xi_1...xi_k / prod_l ((xi_l...xi_k)^2 - tau^(k-l+1))`` for ``xi_plus = (xi_1, ..., xi_k)``."""
    xi = np.asarray(xi_plus, dtype=complex)
    k = xi.shape[-1]
    P = _suffix_products(xi)
    powers = params.tau ** np.arange(k, 0, -1)
    den = P * P - powers
    _check_denominator(den, 1.0, "phi_plus denominator")
    out = np.prod(xi, axis=-1) / np.prod(den, axis=-1)
    return out[()] if out.ndim == 0 else out


def phi_minus(xi_minus, params: ModelParams):
    """``xi_{-1}^1 xi_{-2}^3 ... / prod_l (tau^(k-l+1) - (xi_{-l}...xi_{-k})^2)``.

    ``xi_minus`` is ordered ``(xi_{-1}, ..., xi_{-k})``.
    """
    params.require_positive_p()
    xi = np.asarray(xi_minus, dtype=complex)
    k = xi.shape[-1]
    P = _suffix_products(xi)
    powers = params.tau ** np.arange(k, 0, -1)
    den = powers - P * P
    _check_denominator(den, params.tau**k, "phi_minus denominator")
    num = np.prod(xi ** np.arange(1, 2 * k, 2), axis=-1)
    out = num / np.prod(den, axis=-1)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# coefficients


def coeff_finite(m: int, S_minus: Sequence[int], S_plus: Sequence[int], Y: FiniteSet, params: ModelParams) -> float:
    """Coefficient of the ``(S_-, S_+)`` integral in the finite-``Y`` formula for ``x_m``."""
    tau, q = params.tau, params.q
    Ym = Y.minus
    k_minus, k_plus = len(S_minus), len(S_plus)
    k = k_minus + k_plus
    rest = [y for y in Ym if y not in set(S_minus)]
    binom = tau_binomial(k - 1, m - len(rest) - 1, tau)
    if binom == 0.0:
        return 0.0
    expo = (
        m * (m - 1) // 2
        - k_plus * m
        + sigma_count(S_plus, Y.sites)
        + sigma_count(Ym, rest)
        - m * len(Ym)
        + k_minus * (k_minus + 1) // 2
    )
    return (-1) ** (m + len(rest)) * tau**expo * q ** (k * (k - 1) // 2) * binom


def coeff_shifted(m: int, S_minus: Sequence[int], S_plus: Sequence[int], Y: FiniteSet, params: ModelParams) -> float:
    """Coefficient for the particle with ``m`` particles of ``Y_+`` at or left of it,
    i.e. the finite coefficient at index ``m + |Y_-|`` in the reduced form.
    """
    tau, q = params.tau, params.q
    Ym, Yp = Y.minus, Y.plus
    Sm, Sp = set(S_minus), set(S_plus)
    k_minus, k_plus = len(Sm), len(Sp)
    k = k_minus + k_plus
    binom = tau_binomial(k - 1, m + k_minus - 1, tau)
    if binom == 0.0:
        return 0.0
    expo = (
        sigma_count(Sp, [y for y in Yp if y not in Sp])
        - sigma_count([y for y in Ym if y not in Sm], Sm)
        + m * (m - 1) // 2
        + k_plus * (k_plus + 1) // 2
        - m * k_plus
    )
    return (-1) ** (m + k_minus) * tau**expo * q ** (k * (k - 1) // 2) * binom


def _check_odd(m: int):
    if m % 2 == 0:
        raise ValueError(f"tagged label m={m} must be odd for the alternating condition")


def coeff_alt(m: int, k_minus: int, k_plus: int, params: ModelParams) -> float:
    """Coefficient of the ``(k_-, k_+)`` term of the unsymmetrised alternating series."""
    _check_odd(m)
    k = k_minus + k_plus
    tau, q = params.tau, params.q
    h = (m + 1) // 2
    binom = tau_binomial(k - 1, h - 1 + k_minus, tau)
    if binom == 0.0:
        return 0.0
    expo = (m * m - 1) // 8 + k * (k + 1) // 2 - k_plus * k_minus - h * k_plus
    return (-1) ** (h + k_minus) * _tau_pow(tau, expo) * q ** (k * (k - 1) // 2) * binom


def coeff_alt_sym(m: int, k_minus: int, k_plus: int, params: ModelParams) -> float:
    """Coefficient of the ``(k_-, k_+)`` term of the symmetrised (determinantal) series."""
    _check_odd(m)
    k = k_minus + k_plus
    p, q, tau = params.p, params.q, params.tau
    h = (m + 1) // 2
    binom = tau_binomial(k - 1, h - 1 + k_minus, tau)
    if binom == 0.0:
        return 0.0
    expo = (m * m - 1) // 8 + k_plus * (k_plus + 1) // 2 - h * k_plus
    return (
        (-1) ** (h - k_plus)
        / (math.factorial(k_plus) * math.factorial(k_minus))
        * _tau_pow(tau, expo)
        * q ** (k * (k + 1) // 2 - k_minus * (k_minus - 1) // 2)
        * p ** (-(k_plus * (k_plus - 1) // 2))
        * binom
    )


def _tau_pow(tau, e):
    if tau == 0.0:
        return 1.0 if e == 0 else 0.0 if e > 0 else math.inf
    return tau**e


def coeff_step(m: int, k: int, params: ModelParams) -> float:
    """Prefactor of the ``k``-fold integral in the step-initial-condition series."""
    tau, q = params.tau, params.q
    binom = tau_binomial(k - 1, k - m, tau)
    if binom == 0.0:
        return 0.0
    return (-1) ** m * _tau_pow(tau, (k - m) * (k - m + 1) // 2) * q ** (k * (k - 1)) / math.factorial(k) * binom


def coeff_step_det(m: int, k: int, params: ModelParams) -> float:
    """Constant in front of ``det K`` in the determinantal step series.

    Obtained from :func:`coeff_step` through the Cauchy-type determinant
    evaluation checked in :func:`asepdist.identities.lemma31_check`.
    """
    p, q = params.p, params.q
    return coeff_step(m, k, params) * (-1) ** k * (p * q) ** (-(k * (k - 1) // 2)) * q**k


# ---------------------------------------------------------------------------
# kernels


def kernel_plus(xi, xi_prime, x: int, t: float, params: ModelParams):
    """Kernel on the large circle: ``xi'^x e^{eps(xi') t} (xi' - tau) xi' / ((p + q xi xi' - xi)(xi'^2 - tau))``."""
    xi = np.asarray(xi, dtype=complex)
    xp = np.asarray(xi_prime, dtype=complex)
    tau = params.tau
    den = f_denominator(xi, xp, params)
    _check_denominator(den, 1.0, "kernel denominator")
    sq = xp * xp - tau
    _check_denominator(sq, 1.0, "xi'^2 - tau")
    out = xp**x * np.exp(epsilon(xp, params) * t) / den * (xp - tau) * xp / sq
    return out[()] if out.ndim == 0 else out


def kernel_minus(xi, xi_prime, x: int, t: float, params: ModelParams):
    """Kernel on the small circle: ``xi'^x e^{eps(xi') t} (xi' - tau) xi'^{-1} / ((p + q xi xi' - xi)(xi'^{-2} - 1/tau))``."""
    params.require_positive_p()
    xi = np.asarray(xi, dtype=complex)
    xp = np.asarray(xi_prime, dtype=complex)
    tau = params.tau
    if np.any(xp == 0):
        raise PoleError("kernel_minus undefined at xi' = 0")
    den = f_denominator(xi, xp, params)
    _check_denominator(den, 1.0, "kernel denominator")
    inv = 1.0 / xp
    sq = inv * inv - 1.0 / tau
    _check_denominator(sq, 1.0 / tau, "xi'^-2 - 1/tau")
    out = xp**x * np.exp(epsilon(xp, params) * t) / den * (xp - tau) * inv / sq
    return out[()] if out.ndim == 0 else out


def kernel_step(xi, xi_prime, x: int, t: float, params: ModelParams):
    """Step-condition kernel ``xi^x e^{eps(xi) t} / (p + q xi xi' - xi)``."""
    xi = np.asarray(xi, dtype=complex)
    xp = np.asarray(xi_prime, dtype=complex)
    den = f_denominator(xi, xp, params)
    _check_denominator(den, 1.0, "kernel denominator")
    out = xi**x * np.exp(epsilon(xi, params) * t) / den
    return out[()] if out.ndim == 0 else out


def _kernel_matrix(kernel, xi, x, t, params):
    xi = np.asarray(xi, dtype=complex)
    return kernel(xi[..., :, None], xi[..., None, :], x, t, params)


def symmetric_pair_product(xi, tau: float):
    """``prod_{a<b} (1 + tau - xi_a - xi_b) / (tau - xi_a xi_b)`` over the last axis."""
    xi = np.asarray(xi, dtype=complex)
    k = xi.shape[-1]
    out = np.ones(xi.shape[:-1], dtype=complex)
    for a in range(k):
        for b in range(a + 1, k):
            den = tau - xi[..., a] * xi[..., b]
            _check_denominator(den, 1.0, "tau - xi_a xi_b")
            out = out * (1.0 + tau - xi[..., a] - xi[..., b]) / den
    return out


def g_plus(xi_plus, x: int, t: float, params: ModelParams):
    """``det[K_+(xi_a, xi_b)]`` times the symmetric pair product."""
    xi = np.asarray(xi_plus, dtype=complex)
    det = np.linalg.det(_kernel_matrix(kernel_plus, xi, x, t, params))
    out = det * symmetric_pair_product(xi, params.tau)
    return out[()] if np.ndim(out) == 0 else out


def g_minus(xi_minus, x: int, t: float, params: ModelParams):
    """``det[K_-(xi_a, xi_b)]`` times the pair product in the inverse variables."""
    xi = np.asarray(xi_minus, dtype=complex)
    det = np.linalg.det(_kernel_matrix(kernel_minus, xi, x, t, params))
    out = det * symmetric_pair_product(1.0 / xi, 1.0 / params.tau)
    return out[()] if np.ndim(out) == 0 else out


def _mixed_product(xi_minus, xi_plus, params):
    out = np.ones(xi_minus.shape[:-1], dtype=complex)
    for a in range(xi_minus.shape[-1]):
        for b in range(xi_plus.shape[-1]):
            out = out * f_factor(xi_minus[..., a], xi_plus[..., b], params)
    return out


# ---------------------------------------------------------------------------
# integrands (arrays of shape (n, k_minus + k_plus), small-circle block first)


def alternating_integrand(k_minus: int, x: int, t: float, params: ModelParams):
    def integrand(xi):
        xm, xp = xi[:, :k_minus], xi[:, k_minus:]
        out = np.ones(len(xi), dtype=complex)
        if k_minus:
            out = out * g_minus(xm, x, t, params)
        if xp.shape[1]:
            out = out * g_plus(xp, x, t, params)
        if k_minus and xp.shape[1]:
            out = out * _mixed_product(xm, xp, params)
        return out

    return integrand


def alternating_unsym_integrand(k_minus: int, x: int, t: float, params: ModelParams):
    def integrand(xi):
        xm, xp = xi[:, :k_minus], xi[:, k_minus:]
        out = i_weight(x, xi, t, params)
        if k_minus:
            # tuple holds xi_{-k}, ..., xi_{-1}; phi_minus wants xi_{-1} first
            out = out * phi_minus(xm[:, ::-1], params)
        if xp.shape[1]:
            out = out * phi_plus(xp, params)
        return out

    return integrand


def step_integrand(x: int, t: float, params: ModelParams):
    tau = params.tau

    def integrand(xi):
        k = xi.shape[1]
        out = np.ones(len(xi), dtype=complex)
        for a in range(k):
            for b in range(k):
                if a != b:
                    out = out * f_factor(xi[:, a], xi[:, b], params)
        w = xi**x * np.exp(epsilon(xi, params) * t) / ((1.0 - xi) * (xi - tau))
        return out * np.prod(w, axis=1)

    return integrand


def step_det_integrand(x: int, t: float, params: ModelParams):
    def integrand(xi):
        return np.linalg.det(_kernel_matrix(kernel_step, xi, x, t, params))

    return integrand


def step_unsym_integrand(x: int, t: float, params: ModelParams):
    tau = params.tau

    def integrand(xi):
        k = xi.shape[1]
        P = _suffix_products(xi)
        den = P - tau ** np.arange(k, 0, -1)
        return i_weight(x, xi, t, params) * _tau_pow(tau, k * (k + 1) // 2) / np.prod(den, axis=1)

    return integrand


def onesided_integrand(k0: int, x: int, t: float, params: ModelParams):
    tau = params.tau

    def integrand(xi):
        k = xi.shape[1]
        out = np.ones(len(xi), dtype=complex)
        for a in range(k):
            for b in range(k):
                if a != b:
                    out = out * f_factor(xi[:, a], xi[:, b], params)
        w = xi ** (x + k0) * np.exp(epsilon(xi, params) * t) / ((1.0 - xi) * (xi * xi - tau))
        return out * np.prod(w, axis=1) * symmetric_pair_product(xi, tau)

    return integrand


def onesided_unsym_integrand(k0: int, x: int, t: float, params: ModelParams):
    tau = params.tau

    def integrand(xi):
        k = xi.shape[1]
        return (
            i_weight(x, xi, t, params)
            * np.prod(xi**k0, axis=1)
            * _tau_pow(tau, k * (k + 1) // 2)
            * phi_plus(xi, params)
            / np.prod(xi, axis=1)
        )

    return integrand


def coeff_onesided(m: int, k: int, params: ModelParams) -> float:
    """Prefactor of the ``k``-fold integral in the one-sided alternating series."""
    tau, q = params.tau, params.q
    binom = tau_binomial(k - 1, k - m, tau)
    if binom == 0.0:
        return 0.0
    return (-1) ** m * _tau_pow(tau, (k - m) * (k - m + 1) // 2) * q ** (k * (k - 1)) / math.factorial(k) * binom


def coeff_onesided_unsym(m: int, k: int, params: ModelParams) -> float:
    """Finite-set coefficient ``(-1)^m q^{k(k-1)/2} tau^{m(m-1)/2 - km} [k-1, m-1]``."""
    tau, q = params.tau, params.q
    binom = tau_binomial(k - 1, m - 1, tau)
    if binom == 0.0:
        return 0.0
    return (-1) ** m * q ** (k * (k - 1) // 2) * _tau_pow(tau, m * (m - 1) // 2 - k * m) * binom


# ---------------------------------------------------------------------------
# series engine


def _evaluate_term(coef, integrand, k_minus, k_plus, plan, tol, symmetric, workers):
    idx = TermIndex(k_minus, k_plus)
    if k_minus + k_plus == 0:
        return TermValue(idx, coef, complex(coef), 0.0, 0)
    qtol = tol / max(abs(coef), 1e-300)
    try:
        res = integrate_tensor(integrand, k_minus, k_plus, plan, qtol, symmetric=symmetric, workers=workers)
    except QuadratureNotConverged as exc:
        log.warning("%s", exc)
        res = exc.result
        return TermValue(idx, coef, coef * res.value, res.est_error, res.nodes_used, converged=False)
    return TermValue(idx, coef, coef * res.value, res.est_error, res.nodes_used)


def _finish(terms, tol, converged, tail_bound):
    raw = complex(math.fsum(tv.value.real for tv in terms), math.fsum(tv.value.imag for tv in terms))
    value = min(1.0, max(0.0, raw.real))
    est = math.fsum(abs(tv.coefficient) * tv.est_error for tv in terms)
    return SeriesReport(
        value=value,
        raw=raw,
        terms=terms,
        tail_bound=tail_bound,
        im_residual=abs(raw.imag),
        # terms limited by rounding return normally, so check the budget as a whole
        converged=converged and all(tv.converged for tv in terms) and est <= tol,
    )


def run_shells(
    shell_terms: Callable[[int], list[tuple[float, Callable, int, int, bool]]],
    tol: float,
    kmax: int,
    plan: ContourPlan,
    workers: int = 1,
    kmin: int = 0,
    raise_on_fail: bool = True,
) -> SeriesReport:
    """Sum shells ``k = kmin, kmin+1, ...`` of independent terms.

    ``shell_terms(k)`` lists ``(coefficient, integrand, k_minus, k_plus,
    symmetric)`` for the structurally nonzero terms of shell ``k``.  The sum
    stops once two consecutive nonzero shells each contribute less than
    ``tol``; ``tail_bound`` extrapolates the last shell geometrically.  A
    term whose quadrature fails ends the sum as not converged.
    """
    terms: list[TermValue] = []
    small_run = 0
    shell_sizes: list[float] = []
    for k in range(kmin, kmax + 1):
        specs = shell_terms(k)
        if not specs:
            continue
        shell = [_evaluate_term(c, f, km, kp, plan, tol / 4, sym, workers) for c, f, km, kp, sym in specs]
        terms.extend(shell)
        size = abs(sum(tv.value for tv in shell))
        shell_sizes.append(size)
        log.debug("shell k=%d size=%.3g", k, size)
        small_run = small_run + 1 if size < tol else 0
        if small_run >= 2 or any(not tv.converged for tv in shell):
            break
    report = _finish(terms, tol, small_run >= 2, _tail(shell_sizes))
    if not report.converged and raise_on_fail:
        bad = [tv.index for tv in terms if not tv.converged]
        why = f"quadrature failed for {bad}" if bad else f"series not converged by k={kmax}"
        raise SeriesNotConverged(why, report)
    return report


def _tail(sizes):
    if len(sizes) < 2 or sizes[-2] == 0:
        return sizes[-1] if sizes else 0.0
    ratio = sizes[-1] / sizes[-2]
    if ratio >= 1:
        return math.inf
    return sizes[-1] * ratio / (1 - ratio)


def _resolve_plan(params, plan, mixed=True):
    return plan if plan is not None else plan_contours(params, mixed=mixed)


def prob_alternating(
    query: DistributionQuery,
    params: ModelParams,
    plan: ContourPlan | None = None,
    workers: int = 1,
    raise_on_fail: bool = True,
) -> SeriesReport:
    """``P(X_m(t) <= x)`` for the two-sided alternating configuration (odd sites occupied).

    Determinantal form: each ``(k_-, k_+)`` term integrates the mixed pair
    product times ``G_-`` and ``G_+``.
    """
    params.require_positive_p()
    _check_odd(query.m)
    plan = _resolve_plan(params, plan)
    m, x, t = query.m, query.x, query.t

    def shell(k):
        out = []
        for k_minus in range(k + 1):
            c = coeff_alt_sym(m, k_minus, k - k_minus, params)
            if c != 0.0:
                out.append((c, alternating_integrand(k_minus, x, t, params), k_minus, k - k_minus, True))
        return out

    return run_shells(shell, query.tol, query.kmax, plan, workers, raise_on_fail=raise_on_fail)


def prob_alternating_unsym(
    query: DistributionQuery,
    params: ModelParams,
    plan: ContourPlan | None = None,
    workers: int = 1,
    raise_on_fail: bool = True,
) -> SeriesReport:
    """Same probability through the unsymmetrised integrand ``I(x, xi) phi_- phi_+``.

    Visits the full tensor grid, so it is only practical for small ``kmax``.
    """
    params.require_positive_p()
    _check_odd(query.m)
    plan = _resolve_plan(params, plan)
    m, x, t = query.m, query.x, query.t

    def shell(k):
        out = []
        for k_minus in range(k + 1):
            c = coeff_alt(m, k_minus, k - k_minus, params)
            if c != 0.0:
                out.append((c, alternating_unsym_integrand(k_minus, x, t, params), k_minus, k - k_minus, False))
        return out

    return run_shells(shell, query.tol, query.kmax, plan, workers, raise_on_fail=raise_on_fail)


def prob_finite(
    Y: FiniteSet,
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    plan: ContourPlan | None = None,
    tol: float = 1e-10,
    workers: int = 1,
) -> SeriesReport:
    """``P(x_m(t) <= x)`` for the ``m``-th particle from the left of a finite configuration.

    Exact finite sum over ``k_+-`` and subsets ``S_+- of Y_+-``; the subset sum
    is folded into the integrand so each ``(k_-, k_+)`` needs one quadrature.

    With an explicit ``plan`` the sum is evaluated as given.  Otherwise all
    sites are placed on the large circle (the split is moved below ``Y``),
    and for ``x`` right of the starting site the complement is taken in the
    mirror image, ``1 - P(x~_{N+1-m} <= -x-1)`` with ``p`` and ``q`` swapped.
    Both keep ``|xi^(x-y)|`` below one on the contour; evaluated directly,
    large ``x`` drowns the answer in rounding from ``R^(k (x-y))``.
    """
    N = len(Y.sites)
    if not 1 <= m <= N:
        raise ValueError(f"particle index m={m} outside 1..{N}")
    if len(Y.sites) > MAX_FINITE_SITES:
        raise ValueError(f"at most {MAX_FINITE_SITES} initial sites supported")
    if plan is not None:
        return _finite_direct(Y, m, x, t, params, plan, tol, workers)
    if x <= Y.sites[m - 1] or params.p == 0.0:
        Y_all = FiniteSet(Y.sites, split=Y.sites[0] - 1)
        return _finite_direct(Y_all, m, x, t, params, plan_contours(params, mixed=False), tol, workers)
    mirrored = tuple(sorted(-y for y in Y.sites))
    params_m = ModelParams(params.q)
    rep = _finite_direct(FiniteSet(mirrored, split=mirrored[0] - 1), N + 1 - m, -x - 1, t, params_m,
                         plan_contours(params_m, mixed=False), tol, workers)
    raw = 1.0 - rep.raw
    return replace(rep, value=min(1.0, max(0.0, raw.real)), raw=raw)


def _finite_direct(Y, m, x, t, params, plan, tol, workers) -> SeriesReport:
    Ym, Yp = Y.minus, Y.plus
    terms = []
    for k_minus in range(len(Ym) + 1):
        for k_plus in range(len(Yp) + 1):
            subsets, coefs = [], []
            for Sm in enumerate_subsets(Ym, k_minus):
                for Sp in enumerate_subsets(Yp, k_plus):
                    c = coeff_finite(m, Sm, Sp, Y, params)
                    if c != 0.0:
                        subsets.append(np.array(Sm + Sp))
                        coefs.append(c)
            if not coefs:
                continue
            if k_minus + k_plus == 0:
                terms.append(TermValue(TermIndex(0, 0), coefs[0], complex(coefs[0]), 0.0, 0))
                continue
            sites = np.array(subsets)
            cvec = np.array(coefs)

            def integrand(xi, sites=sites, cvec=cvec):
                # sum_S c_S prod_a xi_a^{-s_a}; sites along each row increase with tuple position
                logs = np.log(xi)
                weights = np.exp(-logs @ sites.T.astype(float))
                return i_weight(x, xi, t, params) * (weights @ cvec)

            terms.append(_evaluate_term(1.0, integrand, k_minus, k_plus, plan, tol, False, workers))
    return _finish(terms, tol, True, 0.0)


def prob_step(
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    plan: ContourPlan | None = None,
    tol: float = 1e-9,
    kmax: int = 8,
    form: str = "product",
    workers: int = 1,
    raise_on_fail: bool = True,
) -> SeriesReport:
    """``P(x_m(t) <= x)`` for the ``m``-th particle when every positive site starts occupied.

    ``form`` selects the integrand: ``"product"`` (pair product over
    ``i != j``), ``"det"`` (determinant of the step kernel) or ``"unsym"``
    (geometric-series form before symmetrisation; full grid, small ``kmax``).
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    plan = _resolve_plan(params, plan, mixed=False)
    if form == "product":
        make = lambda k: [(coeff_step(m, k, params), step_integrand(x, t, params), 0, k, True)]
    elif form == "det":
        make = lambda k: [(coeff_step_det(m, k, params), step_det_integrand(x, t, params), 0, k, True)]
    elif form == "unsym":
        make = lambda k: [(coeff_onesided_unsym(m, k, params), step_unsym_integrand(x, t, params), 0, k, False)]
    else:
        raise ValueError(f"unknown form {form!r}")

    def shell(k):
        return [s for s in make(k) if s[0] != 0.0]

    return run_shells(shell, tol, kmax, plan, workers, kmin=1, raise_on_fail=raise_on_fail)


def prob_onesided(
    k0: int,
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    plan: ContourPlan | None = None,
    tol: float = 1e-9,
    kmax: int = 8,
    form: str = "sym",
    workers: int = 1,
    raise_on_fail: bool = True,
) -> SeriesReport:
    """``P(x_m(t) <= x)`` when the sites ``2n - k0``, ``n >= 1``, start occupied.

    ``form="unsym"`` evaluates the geometric-series integrand before
    symmetrisation (full grid).
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    params.require_positive_p()
    plan = _resolve_plan(params, plan, mixed=False)
    if form == "sym":
        make = lambda k: [(coeff_onesided(m, k, params), onesided_integrand(k0, x, t, params), 0, k, True)]
    elif form == "unsym":
        make = lambda k: [(coeff_onesided_unsym(m, k, params), onesided_unsym_integrand(k0, x, t, params), 0, k, False)]
    else:
        raise ValueError(f"unknown form {form!r}")

    def shell(k):
        return [s for s in make(k) if s[0] != 0.0]

    return run_shells(shell, tol, kmax, plan, workers, kmin=1, raise_on_fail=raise_on_fail)


def current_tail_prob(x: int, t: float, m: int, params: ModelParams, plan: ContourPlan | None = None, **kw) -> float:
    """``P(T(x, t) >= m)``: at least ``m`` particles at or left of ``x`` (step start, ``p < q``)."""
    if not params.p < params.q:
        raise ValueError("the current identity needs p < q")
    return prob_step(m, x, t, params, plan, **kw).value
