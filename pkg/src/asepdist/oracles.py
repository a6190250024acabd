"""Independent ground truth: closed-form single particle law, exact master
equation for small systems, and continuous-time Monte Carlo.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import ive

from .model import (
    AlternatingZ,
    FiniteSet,
    InitialCondition,
    ModelParams,
    OneSidedAlternating,
    StepPositive,
)

log = logging.getLogger(__name__)


class StateSpaceTooLarge(ValueError):
    pass


class WindowTooSmall(RuntimeError):
    pass


class BufferViolation(RuntimeWarning):
    pass


def light_cone_margin(t: float) -> int:
    return 10 + math.ceil(5 * t)


# ---------------------------------------------------------------------------
# single particle


def skellam_pmf(d, t: float, params: ModelParams):
    """``P(displacement = d)`` for one free particle (Poisson(pt) - Poisson(qt))."""
    d = np.asarray(d)
    if t == 0:
        return (d == 0).astype(float)
    p, q = params.p, params.q
    if p == 0 or q == 0:
        lam = t * (p if q == 0 else q)
        n = d if q == 0 else -d
        n = np.asarray(n)
        out = np.zeros(n.shape)
        ok = n >= 0
        out[ok] = np.exp(-lam + n[ok] * math.log(lam) - np.array([math.lgamma(v + 1) for v in n[ok].ravel()]).reshape(n[ok].shape))
        return out
    # e^{-t} (p/q)^{d/2} I_d(2 t sqrt(pq)), with I scaled by e^{-2t sqrt(pq)}
    z = 2.0 * t * math.sqrt(p * q)
    return np.exp(z - t + 0.5 * d * math.log(p / q)) * ive(np.abs(d), z)


def skellam_single(y0: int, x: int, t: float, params: ModelParams) -> float:
    """``P(y0 + displacement <= x)`` by direct summation of the Poisson double series.

    The series over displacements is truncated once the remaining mass is
    below 1e-14.
    """
    if t == 0:
        return 1.0 if x >= y0 else 0.0
    p, q = params.p, params.q
    dmax = x - y0
    # left tail: displacements d <= dmax.  Sum over d from dmax down to -inf
    # until negligible, or compute complement from the right when cheaper.
    spread = int(10 + 6 * t + 4 * math.sqrt(t) * 10)
    lo = min(dmax, 0) - spread
    if dmax < lo:
        return 0.0
    total = []
    for d in range(lo, dmax + 1):
        total.append(_skellam_term(d, t, p, q))
    left = math.fsum(total)
    if dmax >= spread:
        right = math.fsum(_skellam_term(d, t, p, q) for d in range(dmax + 1, dmax + 1 + spread))
        return 1.0 - right
    return left


def _skellam_term(d: int, t: float, p: float, q: float) -> float:
    # sum_{k >= max(0,-d)} e^{-t} (pt)^{d+k} (qt)^k / ((d+k)! k!)
    terms = []
    k = max(0, -d)
    while True:
        n = d + k
        if p == 0 and n > 0 or q == 0 and k > 0:
            break
        logt = -t
        if n:
            logt += n * math.log(p * t) - math.lgamma(n + 1)
        if k:
            logt += k * math.log(q * t) - math.lgamma(k + 1)
        term = math.exp(logt)
        terms.append(term)
        if k > (p + q) * t + 5 and term < 1e-17:
            break
        k += 1
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# master equation


@dataclass
class MasterEquationResult:
    """Exact distribution of the ordered particle positions at time ``t``."""

    window: tuple[int, int]
    states: np.ndarray  # (n_states, N) sorted site arrays
    prob: np.ndarray  # (n_states,)
    boundary_mass: float

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    def cdf(self, i: int, x) -> np.ndarray:
        """``P(x_i(t) <= x)`` for the ``i``-th particle from the left (1-based)."""
        x = np.atleast_1d(np.asarray(x))
        pos = self.states[:, i - 1]
        return np.array([self.prob[pos <= xx].sum() for xx in x])

    def total_mass(self) -> float:
        return float(math.fsum(self.prob))


def _enumerate_states(lo: int, hi: int, N: int) -> np.ndarray:
    from .contour import combinations_array

    return combinations_array(hi - lo + 1, N) + lo


def master_equation(
    Y: FiniteSet | tuple[int, ...] | list[int],
    window: tuple[int, int] | None,
    t: float,
    params: ModelParams,
    max_states: int = 2_000_000,
    boundary_tol: float = 1e-8,
) -> MasterEquationResult:
    """Solve ``dP/dt = P Q`` for the exclusion process restricted to ``window``.

    Jumps out of the window are suppressed.  The boundary mass (probability
    that some particle is within two sites of a window edge) certifies the
    truncation; above ``boundary_tol`` a :class:`WindowTooSmall` is raised.
    """
    sites = tuple(Y.sites) if isinstance(Y, FiniteSet) else tuple(sorted(Y))
    N = len(sites)
    if N > 8:
        raise StateSpaceTooLarge("master equation limited to 8 particles")
    if window is None:
        margin = light_cone_margin(t)
        window = (sites[0] - margin, sites[-1] + margin)
    lo, hi = window
    if sites[0] < lo or sites[-1] > hi:
        raise ValueError("initial configuration outside the window")
    W = hi - lo + 1
    if math.comb(W, N) > max_states:
        raise StateSpaceTooLarge(f"C({W},{N}) states exceed {max_states}")
    states = _enumerate_states(lo, hi, N)
    n_states = len(states)
    # rank of each state through a positional hash
    base = W + 1
    weights = base ** np.arange(N - 1, -1, -1, dtype=np.int64)
    keys = (states - lo) @ weights
    order = np.argsort(keys)
    sorted_keys = keys[order]

    def rank(arr):
        k = (arr - lo) @ weights
        pos = np.searchsorted(sorted_keys, k)
        return order[pos]

    rows, cols, vals = [], [], []
    all_idx = np.arange(n_states)
    for i in range(N):
        for step, rate in ((1, params.p), (-1, params.q)):
            if rate == 0:
                continue
            target = states[:, i] + step
            ok = (target >= lo) & (target <= hi)
            if i + 1 < N and step == 1:
                ok &= target != states[:, i + 1]
            if i > 0 and step == -1:
                ok &= target != states[:, i - 1]
            src = all_idx[ok]
            new = states[ok].copy()
            new[:, i] = target[ok]
            dst = rank(new)
            rows.append(src)
            cols.append(dst)
            vals.append(np.full(len(src), rate))
            rows.append(src)
            cols.append(src)
            vals.append(np.full(len(src), -rate))
    Q = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_states, n_states)
    )
    p0 = np.zeros(n_states)
    p0[rank(np.array([sites]))[0]] = 1.0
    if t > 0:
        prob = expm_multiply(Q.T.tocsr() * t, p0)
    else:
        prob = p0
    prob = np.clip(prob, 0.0, None) if np.all(prob > -1e-14) else prob
    near = (states[:, 0] <= lo + 2) | (states[:, -1] >= hi - 2)
    boundary = float(prob[near].sum())
    if boundary > boundary_tol:
        raise WindowTooSmall(f"boundary mass {boundary:.3g} exceeds {boundary_tol:.3g}; enlarge the window")
    return MasterEquationResult(window=(lo, hi), states=states, prob=prob, boundary_mass=boundary)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    initial: InitialCondition
    t_end: float
    trials: int
    seed: int
    tagged_origin: int
    window: tuple[int, int] | None = None
    batch: int = 50_000

    def resolved_window(self) -> tuple[int, int]:
        if self.window is not None:
            return self.window
        margin = light_cone_margin(self.t_end)
        return (self.tagged_origin - margin, self.tagged_origin + margin)

    def initial_sites(self) -> np.ndarray:
        lo, hi = self.resolved_window()
        init = self.initial
        if isinstance(init, FiniteSet):
            sites = list(init.sites)
        else:
            sites = init.sites_in(lo, hi)
        return np.array(sites, dtype=np.int64)

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        lo, hi = self.resolved_window()
        margin = light_cone_margin(self.t_end)
        sites = self.initial_sites()
        if self.tagged_origin not in set(sites.tolist()):
            raise ValueError(f"no particle starts at {self.tagged_origin}")
        if not isinstance(self.initial, FiniteSet):
            need_left = not isinstance(self.initial, (OneSidedAlternating, StepPositive))
            if self.tagged_origin - lo < margin and need_left:
                raise ValueError("window margin on the left is below the light-cone buffer")
            if hi - self.tagged_origin < margin:
                raise ValueError("window margin on the right is below the light-cone buffer")


@dataclass
class EmpiricalCdf:
    """Empirical CDF of the tagged particle position over ``support``."""

    support: np.ndarray
    counts: np.ndarray  # cumulative counts: #{X <= support[i]}
    n: int
    flagged: int = 0
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def cdf(self) -> np.ndarray:
        return self.counts / self.n

    def ci_halfwidth(self) -> np.ndarray:
        """95% half-width with the Agresti-Coull centre, so empirical 0 or 1 still gets a width."""
        return _ci(self.counts, self.n)

    def at(self, x) -> float:
        x = int(x)
        if x < self.support[0]:
            return 0.0
        if x > self.support[-1]:
            return 1.0
        return float(self.cdf[x - self.support[0]])

    def ci_at(self, x) -> float:
        return float(_ci(self.at(x) * self.n, self.n))


def _ci(counts, n, z=1.96):
    F = (np.asarray(counts, dtype=float) + 0.5 * z * z) / (n + z * z)
    return z * np.sqrt(F * (1.0 - F) / (n + z * z))


def _simulate_batch(init: np.ndarray, tag: int, n: int, t_end: float, params: ModelParams, seed_seq, lo, hi):
    """Advance ``n`` independent copies; return final tagged positions and flags."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    N = len(init)
    pos = np.tile(init, (n, 1))
    time = np.zeros(n)
    flagged = np.zeros(n, dtype=bool)
    rows = np.arange(n)
    live = rows
    # global exponential race: total rate N, then uniform particle, then direction
    while live.size:
        time[live] += rng.exponential(1.0 / N, size=live.size)
        live = live[time[live] <= t_end]
        if not live.size:
            break
        who = rng.integers(0, N, size=live.size)
        right = rng.random(live.size) < params.p
        step = np.where(right, 1, -1)
        cur = pos[live, who]
        target = cur + step
        nb_idx = np.clip(who + step, 0, N - 1)
        has_nb = np.where(right, who < N - 1, who > 0)
        blocked = has_nb & (pos[live, nb_idx] == target)
        move = ~blocked
        pos[live[move], who[move]] = target[move]
        tp = pos[live, tag]
        flagged[live] |= (tp <= lo + 5) | (tp >= hi - 5)
    if N > 1:
        assert np.all(np.diff(pos, axis=1) > 0), "particle order violated"
    return pos[:, tag], flagged


def mc_simulate(config: SimConfig, workers: int = 1) -> EmpiricalCdf:
    """Empirical CDF of the tagged particle at ``t_end``.

    Trials are split into fixed batches, batch ``b`` drawing from the
    substream ``SeedSequence(seed).spawn`` index ``b``; results are therefore
    identical for any ``workers``.
    """
    config.validate()
    lo, hi = config.resolved_window()
    init = config.initial_sites()
    tag = int(np.searchsorted(init, config.tagged_origin))
    n_batches = -(-config.trials // config.batch)
    seeds = np.random.SeedSequence(config.seed).spawn(n_batches)
    sizes = [min(config.batch, config.trials - b * config.batch) for b in range(n_batches)]

    def run(b):
        return _simulate_batch(init, tag, sizes[b], config.t_end, config.params, seeds[b], lo, hi)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(run, range(n_batches)))
    else:
        outs = [run(b) for b in range(n_batches)]
    final = np.concatenate([o[0] for o in outs])
    flagged = int(sum(o[1].sum() for o in outs))
    if flagged:
        warnings.warn(f"{flagged} trajectories came within 5 sites of the window edge", BufferViolation)
        if flagged > 1e-4 * config.trials:
            raise WindowTooSmall(f"{flagged} of {config.trials} trajectories hit the buffer")
    support = np.arange(final.min(), final.max() + 1)
    hist = np.bincount(final - support[0], minlength=len(support))
    return EmpiricalCdf(
        support=support, counts=np.cumsum(hist), n=config.trials, flagged=flagged, seed=config.seed
    )
