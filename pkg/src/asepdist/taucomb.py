"""tau-deformed combinatorics used by the coefficient formulas."""
from __future__ import annotations

import itertools
import math
from typing import Iterable, Iterator


def tau_binomial(N: int, n: int, tau: float) -> float:
    """Gaussian binomial ``[N, n]_tau``.

    For ``N >= 0`` this is the usual product, zero for ``n < 0`` or ``n > N``,
    and the ordinary binomial at ``tau == 1``.

    The upper index ``N = -1`` appears in the empty (``k = 0``) term of the
    finite and alternating series.  There the negative-upper-index extension
    ``[-1, n] = [-1, -1-n] = (-1)^(n+1) tau^(-n(n+1)/2)`` is used for
    ``n <= -1`` and zero otherwise; ``N < -1`` gives zero.
    """
    if N == -1:
        if n > -1:
            return 0.0
        e = n * (n + 1) // 2
        sign = -1.0 if (n + 1) % 2 else 1.0
        if e == 0:
            return sign
        return sign * tau ** (-e)
    if n < 0 or n > N:
        return 0.0
    if n == 0 or n == N:
        return 1.0
    if tau == 1.0:
        return float(math.comb(N, n))
    if tau == 0.0:
        return 1.0
    lt = math.log(tau)
    out = 1.0
    for j in range(n):
        out *= math.expm1((N - j) * lt) / math.expm1((j + 1) * lt)
    return out


def sigma_count(U: Iterable[int], V: Iterable[int]) -> int:
    """Number of pairs ``(u, v)`` with ``u`` in ``U``, ``v`` in ``V`` and ``u >= v``."""
    vs = sorted(V)
    return sum(_count_le(vs, u) for u in U)


def _count_le(sorted_vals, u):
    lo, hi = 0, len(sorted_vals)
    while lo < hi:
        mid = (lo + hi) // 2
        if sorted_vals[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


def enumerate_subsets(y_side: Iterable[int], k: int) -> Iterator[tuple[int, ...]]:
    """All size-``k`` subsets of a site list, each sorted, in lexicographic order."""
    sites = sorted(y_side)
    if k < 0 or k > len(sites):
        return iter(())
    return itertools.combinations(sites, k)
