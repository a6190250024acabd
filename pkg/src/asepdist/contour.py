"""Contour planning and tensor-product trapezoidal quadrature on circles.

Every contour integral carries the factor ``1/(2 pi i)``, so
``(2 pi i)^{-1} \\oint d\\xi / \\xi = 1``.  On a circle of radius ``rho`` with
``M`` equispaced nodes ``xi_j = rho * w^j`` the rule reads
``(1/M) sum_j g(xi_j) xi_j``, which converges geometrically for integrands
analytic in an annulus around the circle.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams

log = logging.getLogger(__name__)

MAX_NODES = 512
MAX_POINTS = 5 * 10**7
# relative rounding noise of one accumulated quadrature sum
NOISE = 64 * np.finfo(float).eps
CHUNK = 1 << 15


class InfeasiblePlanError(ValueError):
    pass


class QuadratureNotConverged(RuntimeError):
    """Node doubling hit the cap before successive levels agreed to ``tol``."""

    def __init__(self, msg, result: "QuadratureResult"):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class ContourPlan:
    """Radii of the large circle ``R`` and the small circle ``r``.

    ``nodes`` is the starting node count per circle; quadrature doubles it
    as needed.  With ``mixed=False`` the plan only serves integrals on the
    large circle, so ``R`` need not clear the pair poles seen from ``C_r``.
    """

    R: float
    r: float
    params: ModelParams
    nodes: int = 16
    mixed: bool = True

    def scaled(self, R_factor: float, r_factor: float) -> "ContourPlan":
        return replace(self, R=self.R * R_factor, r=self.r * r_factor)

    def violations(self) -> list[str]:
        """Constraints of a valid plan that this one breaks (empty if valid)."""
        p, q, tau = self.params.p, self.params.q, self.params.tau
        R, r = self.R, self.r
        bad = []
        if not r < math.sqrt(tau):
            bad.append("r < sqrt(tau)")
        if not R > max(1.0, math.sqrt(tau)):
            bad.append("R > max(1, sqrt(tau))")
        if not q * R * R - R - p > 0:
            bad.append("q R^2 - R - p > 0")
        if self.mixed and not R > (r + p) / (q * r):
            bad.append("R > (r + p)/(q r)")
        if not p - r - q * r * r > 0:
            bad.append("p - r - q r^2 > 0")
        if not self.nodes >= 16:
            bad.append("nodes >= 16")
        return bad

    def is_valid(self) -> bool:
        return not self.violations()


def plan_contours(
    params: ModelParams, safety: float | None = None, nodes: int = 16, mixed: bool = True
) -> ContourPlan:
    """Smallest admissible radii, inflated by the multiplicative ``safety`` margin.

    The small radius is 0.6 of its largest admissible value, which balances
    the small-circle pole against the mixed-pair bound on ``R``; the
    large radius must then clear ``1``, ``sqrt(tau)``, the positive root of
    ``q R^2 - R - p`` and the mixed-pair pole bound ``(r + p)/(q r)``.

    ``mixed=False`` plans for formulas without small-circle variables and
    drops the last bound, so ``R`` stays near the unit circle and ``|xi^x|``
    (hence rounding) stays small at large ``x``.  The default margin is 1.25
    for mixed plans and 2.0 otherwise, where it keeps the pair poles well
    inside ``C_R``.
    """
    if safety is None:
        safety = 1.25 if mixed else 2.0
    if safety < 1.1:
        raise ValueError("safety margin must be at least 1.1")
    p, q, tau = params.p, params.q, params.tau
    if not 0.0 < p < 1.0:
        raise InfeasiblePlanError("contour plan needs 0 < p < 1")
    # p - r - q r^2 > 0  <=>  r < (sqrt(1 + 4 p q) - 1) / (2 q)
    r_pole = (math.sqrt(1.0 + 4.0 * p * q) - 1.0) / (2.0 * q)
    r = 0.6 * min(math.sqrt(tau), r_pole)
    R_quad = (1.0 + math.sqrt(1.0 + 4.0 * p * q)) / (2.0 * q)
    bounds = [1.0, math.sqrt(tau), R_quad]
    if mixed:
        bounds.append((r + p) / (q * r))
    plan = ContourPlan(R=safety * max(bounds), r=r, params=params, nodes=max(16, nodes), mixed=mixed)
    if not plan.is_valid() or not np.isfinite(plan.R):
        raise InfeasiblePlanError(f"no admissible contours for p={p}: {plan.violations()}")
    return plan


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    est_error: float
    nodes_used: int


# ---------------------------------------------------------------------------
# index sets


def combinations_array(M: int, k: int) -> np.ndarray:
    """All strictly increasing ``k``-tuples from ``range(M)``, lexicographic, shape ``(C(M,k), k)``."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int16)
    # tuples ending below each bound, built one column at a time
    prev = np.arange(M, dtype=np.int16)[:, None]
    for _ in range(1, k):
        blocks = [prev[prev[:, -1] < j] for j in range(M)]
        pieces = [np.hstack([b, np.full((len(b), 1), j, dtype=np.int16)]) for j, b in enumerate(blocks) if len(b)]
        prev = np.vstack(pieces) if pieces else np.zeros((0, prev.shape[1] + 1), dtype=np.int16)
    order = np.lexsort(prev.T[::-1])
    return prev[order]


def _group_indices(M: int, k: int, symmetric: bool) -> tuple[np.ndarray, int]:
    if symmetric:
        return combinations_array(M, k), math.factorial(k)
    if k == 0:
        return np.zeros((1, 0), dtype=np.int16), 1
    grids = np.indices((M,) * k, dtype=np.int16).reshape(k, -1).T
    return grids, 1


def _level(integrand, k_minus, k_plus, plan, M, symmetric, workers):
    omega = np.exp(2j * np.pi * np.arange(M) / M)
    small = plan.r * omega
    large = plan.R * omega
    idx_minus, mult_minus = _group_indices(M, k_minus, symmetric)
    idx_plus, mult_plus = _group_indices(M, k_plus, symmetric)
    n_minus, n_plus = len(idx_minus), len(idx_plus)
    total = n_minus * n_plus
    scale = mult_minus * mult_plus / float(M) ** (k_minus + k_plus)

    starts = list(range(0, total, CHUNK))

    def chunk_sum(start):
        flat = np.arange(start, min(start + CHUNK, total))
        a, b = np.divmod(flat, n_plus)
        xi = np.concatenate([small[idx_minus[a]], large[idx_plus[b]]], axis=1)
        vals = integrand(xi) * np.prod(xi, axis=1)
        return math.fsum(vals.real), math.fsum(vals.imag), math.fsum(np.abs(vals))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk_sum, starts))
    else:
        parts = [chunk_sum(s) for s in starts]
    re = math.fsum(part[0] for part in parts)
    im = math.fsum(part[1] for part in parts)
    mag = math.fsum(part[2] for part in parts)
    return complex(re, im) * scale, mag * scale


def count_points(M: int, k_minus: int, k_plus: int, symmetric: bool) -> int:
    if symmetric:
        return math.comb(M, k_minus) * math.comb(M, k_plus)
    return M ** (k_minus + k_plus)


def integrate_tensor(
    integrand: Callable[[np.ndarray], np.ndarray],
    k_minus: int,
    k_plus: int,
    plan: ContourPlan,
    tol: float,
    symmetric: bool = False,
    workers: int = 1,
    max_nodes: int = MAX_NODES,
    max_points: int = MAX_POINTS,
) -> QuadratureResult:
    """``(2 pi i)^{-k} \\oint ... \\oint integrand`` with ``k_minus`` variables on ``|xi| = r``
    followed by ``k_plus`` variables on ``|xi| = R``.

    ``integrand`` receives an array of shape ``(n, k_minus + k_plus)`` and
    returns ``n`` complex values.  With ``symmetric=True`` the integrand must
    be symmetric within each group and vanish whenever two variables of a
    group coincide; only strictly increasing node tuples are then visited.

    Node counts double from ``plan.nodes`` (or grow by half once doubling
    would exceed ``max_points``) until the error estimate drops below ``tol``: the difference of successive levels, sharpened by the
    observed contraction rate once three levels exist.  The estimate never
    falls below the rounding noise of the sum; when successive levels
    already agree to that noise the result is returned with the larger
    error rather than refined further.  Sums are accumulated per fixed
    chunk with ``math.fsum`` so the result does not depend on ``workers``.
    """
    k = k_minus + k_plus
    if k == 0:
        val = complex(np.asarray(integrand(np.zeros((1, 0), dtype=complex)))[0])
        return QuadratureResult(val, 0.0, 0)
    M = plan.nodes
    # a half-resolution pre-level only serves as the error estimate for the first accepted level
    prev, _ = _level(integrand, k_minus, k_plus, plan, M // 2, symmetric, workers)
    prev_diff = None
    best = None

    def affordable(n):
        return n <= max_nodes and count_points(n, k_minus, k_plus, symmetric) <= max_points

    while True:
        val, mag = _level(integrand, k_minus, k_plus, plan, M, symmetric, workers)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite quadrature value at {M} nodes")
        diff = abs(val - prev)
        noise = NOISE * mag
        err = max(_error_estimate(diff, prev_diff), noise)
        best = QuadratureResult(val, err, M)
        # below the rounding noise of the sum, more nodes cannot help
        if err < tol or (diff <= 4.0 * noise and M > plan.nodes):
            if err >= tol:
                log.warning("k=(%d,%d) limited by rounding: est_error %.3g > tol %.3g", k_minus, k_plus, err, tol)
            return best
        prev, prev_diff = val, diff
        # double when affordable, else try a half step before giving up
        nxt = next((n for n in (2 * M, 3 * M // 2) if affordable(n)), None)
        if nxt is None:
            raise QuadratureNotConverged(
                f"quadrature with k=({k_minus},{k_plus}) not converged at {M} nodes "
                f"(est_error={best.est_error:.3g}, tol={tol:.3g})",
                best,
            )
        M = nxt


def _error_estimate(diff: float, prev_diff: float | None) -> float:
    """Error of the finer of two levels that differ by ``diff``.

    ``diff`` itself bounds the coarser level.  When the previous difference
    shows clear geometric contraction, the error of a doubled rule is roughly
    the square of the coarse one, i.e. ``diff**2 / prev_diff``.
    """
    if prev_diff is None or prev_diff == 0.0 or diff > 0.25 * prev_diff:
        return diff
    return max(diff * diff / prev_diff, 1e-3 * diff)
