"""Monte Carlo estimators and an exact enumeration oracle.

Every estimator derives one random stream per work unit from
``(master_seed, unit_index)`` and reduces by unit index, so results are
reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sim_cluster
from .analytics import CtpParams, c1
from .offspring import DomainError, OffspringDistribution
from .rng import trial_rng

BLOCK = 1 << 16
ENUMERATION_CAP = 10**8


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    trials: int
    ci95: tuple
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_moments(cls, total: float, total_sq: float, n: int, **meta) -> "Estimate":
        mean = total / n
        var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
        se = math.sqrt(var / n)
        return cls(mean, se, n, (mean - 1.96 * se, mean + 1.96 * se), meta)

    @classmethod
    def proportion(cls, hits: int, n: int, **meta) -> "Estimate":
        f = hits / n
        se = math.sqrt(f * (1 - f) / n)
        z = 1.96
        centre = (f + z * z / (2 * n)) / (1 + z * z / n)
        half = z * math.sqrt(f * (1 - f) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        lo = 0.0 if hits == 0 else max(0.0, centre - half)
        hi = 1.0 if hits == n else min(1.0, centre + half)
        return cls(f, se, n, (lo, hi), meta)

    def z_score(self, target: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.value == target else math.copysign(math.inf, self.value - target)
        return (self.value - target) / self.stderr

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "trials": self.trials,
                "ci95": list(self.ci95), **self.meta}


# -- extinction and growth ----------------------------------------------------

def estimate_extinction_probability(params: CtpParams, horizon: int, trials: int,
                                    master_seed: int, thin_above: int = 2_000) -> Estimate:
    """Fraction of runs with ``Z^CT_n = 0`` for some ``n <= horizon``.

    A lower bound on the extinction probability since later extinctions are missed.
    """
    if trials < 100:
        raise DomainError("at least 100 trials are required")
    hits = 0
    for i in range(trials):
        traj = sim_cluster.run(params, horizon, trial_rng(master_seed, i), thin_above=thin_above)
        hits += traj.extinct
    return Estimate.proportion(hits, trials, horizon=horizon)


def _slope(ns: np.ndarray, ys: np.ndarray) -> float:
    x = ns - ns.mean()
    return float((x * (ys - ys.mean())).sum() / (x * x).sum())


def estimate_growth_rate(params: CtpParams, horizon: int, trials: int, window_start: int | None = None,
                         master_seed: int = 0, thin_above: int = 20_000) -> Estimate:
    """Mean least-squares slope of ``ln Z^CT_n`` over ``[window_start, horizon]`` on surviving runs."""
    if window_start is None:
        window_start = horizon // 3
    if not 0 <= window_start < horizon:
        raise DomainError("window_start must lie in [0, horizon)")
    ns = np.arange(window_start, horizon + 1, dtype=float)
    slopes = []
    for i in range(trials):
        traj = sim_cluster.run(params, horizon, trial_rng(master_seed, i), thin_above=thin_above)
        z = np.asarray(traj.ZCT[window_start:], dtype=float)
        if z[-1] > 0:
            slopes.append(_slope(ns, np.log(z)))
    if not slopes:
        raise RuntimeError("no surviving runs")
    s = np.asarray(slopes)
    return Estimate.from_moments(s.sum(), (s * s).sum(), s.size, attempts=trials,
                                 horizon=horizon, window=[window_start, horizon])


# -- cluster statistics -------------------------------------------------------

def _batches(params: CtpParams, trials: int, master_seed: int):
    done, block = 0, 0
    while done < trials:
        n = min(BLOCK, trials - done)
        yield sim_cluster.sample_seed_outputs(params, n, trial_rng(master_seed, block))
        done += n
        block += 1


def estimate_seed_mean(params: CtpParams, trials: int, master_seed: int) -> Estimate:
    """Empirical mean of the total seed output of one cluster."""
    s = sq = 0.0
    for batch in _batches(params, trials, master_seed):
        t = batch.totals.astype(float)
        s += t.sum()
        sq += (t * t).sum()
    return Estimate.from_moments(s, sq, trials)


def estimate_vn(params: CtpParams, n_max: int, trials: int, master_seed: int) -> list[Estimate]:
    """Empirical means of the seeds emitted at cluster ages ``1 .. n_max``."""
    if params.p <= 0.0:
        raise DomainError("p must be positive")
    sums = np.zeros(n_max)
    sumsq = np.zeros(n_max)
    for batch in _batches(params, trials, master_seed):
        k = min(n_max, batch.age_sum.size)
        sums[:k] += batch.age_sum[:k]
        sumsq[:k] += batch.age_sumsq[:k]
    return [Estimate.from_moments(sums[i], sumsq[i], trials, age=i + 1) for i in range(n_max)]


# -- exact enumeration --------------------------------------------------------

def _member_law(weights: np.ndarray, alpha: float):
    """Traceable-child pmf and mean untraceable children of one member, by enumerating
    every (offspring count, split) outcome."""
    kmax = weights.size - 1
    pt = np.zeros(kmax + 1)
    mean_u = 0.0
    for k, wk in enumerate(weights):
        if wk == 0.0:
            continue
        for j in range(k + 1):
            pr = wk * math.comb(k, j) * alpha**j * (1 - alpha) ** (k - j)
            pt[j] += pr
            mean_u += pr * (k - j)
    return pt, mean_u


def enumerate_emissions(weights, b: int, p: float, alpha: float, depth_cap: int,
                        cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Exact expected seeds emitted at cluster ages ``1 .. depth_cap`` for a finite offspring law.

    The cluster is explored generation by generation over every outcome of
    (traceable count, detection) with its exact probability; outcomes that
    lead to the same (size, detection age) are merged.
    """
    w = np.asarray(weights, dtype=float)
    pt, mean_u = _member_law(w, alpha)
    powers = [np.array([1.0]), pt]

    def law(v: int) -> np.ndarray:
        while len(powers) <= v:
            powers.append(np.convolve(powers[-1], pt))
        return powers[v]

    never = None
    states: dict = {}
    if p > 0 and b >= 1:
        states[(1, 0)] = p
    if p < 1:
        states[(1, never)] = states.get((1, never), 0.0) + (1 - p)
    out = np.zeros(depth_cap)
    work = 0
    for age in range(depth_cap):
        nxt: dict = {}
        for (v, s), prob in states.items():
            out[age] += prob * v * mean_u
            if age + 1 == depth_cap:
                continue
            lt = law(v)
            work += lt.size
            if work > cap:
                raise RuntimeError(f"enumeration exceeded {cap} weighted outcomes")
            for t in np.flatnonzero(lt):
                q = prob * lt[t]
                t = int(t)
                branches = [(s, q)]
                if s is never:
                    d = 1.0 - (1.0 - p) ** t
                    branches = [(never, q * (1 - d)), (age + 1, q * d)]
                for s2, q2 in branches:
                    if q2 == 0.0:
                        continue
                    retained = t > 0 and (s2 is never or age + 1 <= s2 + b - 1)
                    if retained:
                        nxt[(t, s2)] = nxt.get((t, s2), 0.0) + q2
        states = nxt
        if not states:
            break
    return out


def enumerate_seed_mean(weights, b: int, p: float, alpha: float, depth_cap: int,
                        cap: int = ENUMERATION_CAP) -> float:
    """Exact ``E[sum_{n <= depth_cap} seeds emitted at age n]``."""
    return math.fsum(enumerate_emissions(weights, b, p, alpha, depth_cap, cap))


def oracle_seed_mean_small(dist: OffspringDistribution, b: int, p: float, alpha: float,
                           depth_cap: int = 10) -> tuple[float, float]:
    """``(value, error_bound)`` where ``value`` is the depth-truncated exact seed mean."""
    if dist.kind != "pmf" or len(dist.weights) > 3:
        raise DomainError("oracle needs a finite pmf with support of size at most 3")
    if b > 1:
        raise DomainError("oracle supports b <= 1")
    if not 1 <= depth_cap <= 12:
        raise DomainError("depth_cap must lie in [1, 12]")
    if p <= 0.0:
        raise DomainError("p must be positive")
    value = enumerate_seed_mean(dist.weights, b, p, alpha, depth_cap)
    lam = dist.mean
    lam_u, lam_t = lam * (1 - alpha), lam * alpha
    if p == 1.0 or lam_u == 0.0 or depth_cap < b:
        err = 0.0 if (p == 1.0 or lam_u == 0.0) else math.inf
    else:
        err = lam_u * lam_t**b * c1(p) * (1 - p) ** (depth_cap - b) / p
    return value, err
