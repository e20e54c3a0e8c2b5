"""Cross-module agreement checks used by ``ctrace validate`` and the test suite.

Each check returns a :class:`CriterionResult`.  ``scale`` shrinks the Monte
Carlo sizes for a quick smoke run; the default of 1 uses the full sizes.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import analytics as an
from . import montecarlo as mc
from . import sim_cluster, sim_direct
from .analytics import CtpParams
from .offspring import OffspringDistribution, thinned_pgf
from .rng import trial_rng

POISSON = OffspringDistribution.poisson(2.5)
FINITE = OffspringDistribution.finite([0.15, 0.25, 0.3, 0.2, 0.1])


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_timed(1, "closed-form critical trace probabilities at p=1")
def closed_form_criticals(scale: float = 1.0):
    t0 = time.perf_counter()
    e1 = an.critical_alpha(POISSON, 1, 1.0)
    e2 = an.critical_alpha(POISSON, 2, 1.0)
    elapsed = time.perf_counter() - t0
    root = (3.75 + math.sqrt(3.75**2 + 4 * 6.25 * 1.5)) / (2 * 6.25)
    ok = abs(e1 - 0.6) <= 1e-10 and abs(e2 - root) <= 1e-9 and elapsed < 1.0
    return ok, f"e_1(1)={e1:.12f} e_2(1)={e2:.12f} root={root:.12f} in {elapsed:.3f}s"


def seed_mean_configs():
    for dist in (POISSON, FINITE):
        for b in (0, 1, 2):
            for p in (0.4, 1.0):
                for alpha in (0.3, 0.7):
                    yield CtpParams(b, p, alpha, dist)


@_timed(2, "simulated seed output matches the analytic seed mean")
def seed_mean_cross_check(scale: float = 1.0, seed: int = 11):
    n = max(1000, int(10**6 * scale))
    worst, fails = 0.0, []
    t0 = time.perf_counter()
    for i, pr in enumerate(seed_mean_configs()):
        est = mc.estimate_seed_mean(pr, n, seed + i)
        y = an.seed_mean(pr, 1e-12)
        z = abs(est.z_score(y)) if est.stderr > 0 else (0.0 if abs(est.value - y) < 1e-12 else math.inf)
        worst = max(worst, z)
        if z > 3.0:
            fails.append((pr.as_dict(), est.value, y))
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 120
    return ok, f"{i + 1} configs x {n} clusters, worst |z|={worst:.2f}, {elapsed:.1f}s" + (f", failing {fails}" if fails else "")


def oracle_configs():
    pmfs = ([0.25, 0.5, 0.25], [0.1, 0.3, 0.6], [0.2, 0.2, 0.6], [0.0, 0.4, 0.6])
    for i, w in enumerate(pmfs):
        for b in (0, 1):
            for p, alpha in ((0.5, 0.5), (0.7, 0.3), (0.35 + 0.1 * i, 0.8)):
                yield OffspringDistribution.finite(w), b, p, alpha


@_timed(3, "enumeration oracle matches the analytic seed mean")
def oracle_equivalence(scale: float = 1.0, depth_cap: int = 10, tol: float = 1e-10):
    count, worst, bad = 0, 0.0, []
    for dist, b, p, alpha in oracle_configs():
        value, err = mc.oracle_seed_mean_small(dist, b, p, alpha, depth_cap)
        y = an.seed_mean(CtpParams(b, p, alpha, dist), tol)
        gap = abs(value - y)
        worst = max(worst, gap / (err + tol))
        count += 1
        if gap > err + tol:
            bad.append((dist.spec(), b, p, alpha, value, y, err))
    ok = count >= 10 and not bad
    return ok, f"{count} instances, worst gap/(bound) = {worst:.3f}" + (f", failing {bad}" if bad else "")


def equivalence_configs():
    for b in (0, 1, 2):
        for p in (0.4, 1.0):
            for alpha in (0.3, 0.7):
                yield CtpParams(b, p, alpha, POISSON)


def pooled_chi2(a: np.ndarray, c: np.ndarray, min_count: int = 10) -> float:
    """p-value of a two-sample chi-square test on integer samples with pooled sparse bins."""
    top = int(max(a.max(initial=0), c.max(initial=0)))
    ha = np.bincount(a, minlength=top + 1)
    hc = np.bincount(c, minlength=top + 1)
    rows_a, rows_c, acc_a, acc_c = [], [], 0, 0
    for x, y in zip(ha, hc):
        acc_a += x
        acc_c += y
        if acc_a + acc_c >= min_count:
            rows_a.append(acc_a)
            rows_c.append(acc_c)
            acc_a = acc_c = 0
    if acc_a + acc_c:
        if rows_a:
            rows_a[-1] += acc_a
            rows_c[-1] += acc_c
        else:
            rows_a.append(acc_a)
            rows_c.append(acc_c)
    if len(rows_a) < 2:
        return 1.0
    return float(stats.chi2_contingency(np.array([rows_a, rows_c]), correction=False).pvalue)


@_timed(4, "direct and cluster simulators agree on the law of Z^CT_3")
def simulator_equivalence(scale: float = 1.0, seed: int = 23, level: float = 1e-3):
    trials = max(500, int(10**4 * scale))
    pvals = []
    for i, pr in enumerate(equivalence_configs()):
        rng_d = trial_rng(seed, 2 * i)
        rng_c = trial_rng(seed, 2 * i + 1)
        a = np.array([sim_direct.run(pr, 3, rng_d, track_untreated=False).ZCT[3] for _ in range(trials)])
        c = np.array([sim_cluster.run(pr, 3, rng_c).ZCT[3] for _ in range(trials)])
        pvals.append(pooled_chi2(a, c))
    ok = len(pvals) >= 8 and min(pvals) > level
    return ok, f"{len(pvals)} configs x {trials} trials, min p-value {min(pvals):.4f}"


@_timed(5, "phase transition around e_0(0.4)")
def phase_transition(scale: float = 1.0, seed: int = 31):
    trials = max(200, int(10**4 * scale))
    e0 = an.critical_alpha(POISSON, 0, 0.4)
    below = CtpParams(0, 0.4, e0 - 0.05, POISSON)
    above = CtpParams(0, 0.4, e0 + 0.05, POISSON)
    ext_below = mc.estimate_extinction_probability(below, 60, trials, seed)
    ext_above = mc.estimate_extinction_probability(above, 60, trials, seed + 1)
    surv = 1.0 - ext_below.value
    ok = surv >= 0.05 and ext_above.value >= 0.99
    return ok, (f"e_0(0.4)={e0:.6f}; survival at -0.05: {surv:.4f}; "
                f"extinction at +0.05: {ext_above.value:.4f} ({trials} trials, horizon 60)")


@_timed(6, "growth rate of ln Z^CT matches the Malthusian parameter")
def growth_rate(scale: float = 1.0, seed: int = 41):
    trials = max(100, int(700 * scale))
    pr = CtpParams(1, 0.4, 0.2, POISSON)
    theta = an.malthusian_theta(pr)
    est = mc.estimate_growth_rate(pr, 30, trials, 10, seed)
    pr0 = pr.replace(alpha=0.0)
    est0 = mc.estimate_growth_rate(pr0, 30, trials, 10, seed + 1)
    need = 500 if scale >= 1.0 else 1
    ok = (abs(est.value - theta) <= 0.05 and abs(est0.value - math.log(2.5)) <= 0.03
          and est.trials >= need and est0.trials >= need)
    return ok, (f"theta={theta:.5f} slope={est.value:.5f}+-{est.stderr:.5f} ({est.trials} survivors); "
                f"alpha=0 slope={est0.value:.5f} vs ln2.5={math.log(2.5):.5f} ({est0.trials} survivors)")


def _semilog_slope(bs, ys) -> float:
    return float(np.polyfit(np.asarray(bs, float), np.log(ys), 1)[0])


@_timed(7, "analytic bounds on the critical curve")
def bound_suite(scale: float = 1.0, tol: float = 1e-10):
    lam = POISSON.mean
    grid = np.linspace(0.02, 1.0, 50)
    problems = []
    for p in grid:
        e0 = an.critical_alpha(POISSON, 0, p, tol)
        if e0 > 1 - p / lam + tol:
            problems.append(("upper", 0, p, e0))
        if p < 1 - 1 / lam and e0 < 1 - 1 / (lam * (1 - p)) - tol:
            problems.append(("lower", 0, p, e0))
        for b in (1, 2, 3):
            eb = an.critical_alpha(POISSON, b, p, tol)
            if eb < an.alpha_crit_p1(lam, b) - tol:
                problems.append(("p=1 floor", b, p, eb))
    slopes = []
    bs = list(range(4, 10))
    for p in (0.2, 0.4, 0.6, 0.8, 1.0):
        gaps = [1 - an.critical_alpha(POISSON, b, p, 1e-13) for b in bs]
        band = [lam**b * g for b, g in zip(bs, gaps)]
        if not all(0 < x <= 2 for x in band):
            problems.append(("band", p, band))
        slopes.append(_semilog_slope(bs, gaps))
    worst = max(abs(s + math.log(lam)) for s in slopes)
    if worst > 0.15:
        problems.append(("slope", slopes))
    return not problems, (f"50-point grid checked for b=0..3; slopes of ln(1-e_b) for b=4..9: "
                          + ", ".join(f"{s:.3f}" for s in slopes) + f" vs {-math.log(lam):.3f}"
                          + (f"; problems {problems}" if problems else ""))


@_timed(8, "tail bounds and fixed-point properties")
def tail_bounds(scale: float = 1.0):
    problems = []
    for p in np.round(np.arange(0.1, 0.95, 0.1), 10):
        bound = an.c1(p)
        sum_bound = 1.0 / (math.e * p * math.log(1.0 / (1.0 - p)))
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0):
            pr = CtpParams(0, p, alpha, POISSON)
            seq = an.compute_sequences(pr, 200)
            n = np.arange(1, seq.h.size)
            if np.any(seq.h[1:] > bound * (1 - p) ** n * (1 + 1e-12)):
                problems.append(("h_n", p, alpha))
            if math.fsum(seq.h) > sum_bound:
                problems.append(("sum", p, alpha))
            s = 1 - p
            g = an.fixed_point(POISSON, alpha, s)
            resid = abs(g - s * thinned_pgf(POISSON, alpha, g))
            slope = s * alpha * POISSON.derivative(1 - alpha + alpha * g, 1)
            if resid > 1e-10 or not slope < 1:
                problems.append(("fixed point", p, alpha, resid, slope))
    return not problems, "p in 0.1..0.9, alpha in {0.1,...,1}" + (f"; problems {problems}" if problems else "")


NEAR_CRITICAL_GAPS = (0.04, 0.02, 0.01, 0.005)


def near_critical_ratios(tol: float = 1e-13):
    lam = POISSON.mean
    p0 = 1 - 1 / lam
    return [an.critical_alpha(POISSON, 0, p0 - t, tol) / math.sqrt(t) for t in NEAR_CRITICAL_GAPS]


@_timed(9, "near-critical exponent of e_0")
def near_critical(scale: float = 1.0):
    lam, p0 = POISSON.mean, 0.6
    ratios = near_critical_ratios()
    diffs = [abs(b - a) for a, b in zip(ratios, ratios[1:])]
    shrinking = all(d2 < d1 for d1, d2 in zip(diffs, diffs[1:]))
    stated = lam / (p0 * (1 - p0) * POISSON.second_factorial_moment)
    root = math.sqrt(stated)
    last = ratios[-1]
    nearest = min((stated, "ratio"), (root, "square root"), key=lambda c: abs(c[0] - last))
    ok = shrinking and abs(last - nearest[0]) <= 0.1 * nearest[0]
    return ok, ("ratios " + ", ".join(f"{r:.4f}" for r in ratios)
                + f"; nearest candidate: {nearest[1]} ({nearest[0]:.4f}); other {stated if nearest[0] == root else root:.4f}")


@_timed(10, "monotone coupling of alive sets")
def monotone_coupling(scale: float = 1.0, seed: int = 53, horizon: int = 6):
    trials = 100
    bad = 0
    checked = 0
    for b, p, alpha in ((0, 0.3, 0.3), (1, 0.4, 0.5), (2, 0.2, 0.1)):
        lo = CtpParams(b, p, alpha, POISSON)
        hi = CtpParams(b, min(1.0, p + 0.2), min(1.0, alpha + 0.2), POISSON)
        for i in range(trials):
            key = int(trial_rng(seed, i).integers(0, 2**63))
            s_lo = sim_direct.init(lo, key=key, track_untreated=False)
            s_hi = sim_direct.init(hi, key=key, track_untreated=False)
            for n in range(horizon + 1):
                if n:
                    sim_direct.step(s_lo, lo)
                    sim_direct.step(s_hi, hi)
                checked += 1
                if not set(s_hi.alive) <= set(s_lo.alive):
                    bad += 1
    return bad == 0, f"{checked} generation snapshots over 3 x {trials} coupled trials, {bad} violations"


ALL = (closed_form_criticals, seed_mean_cross_check, oracle_equivalence, simulator_equivalence,
       phase_transition, growth_rate, bound_suite, tail_bounds, near_critical, monotone_coupling)


def run_all(scale: float = 1.0, echo=print) -> list[CriterionResult]:
    results = []
    for check in ALL:
        res = check(scale=scale)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
