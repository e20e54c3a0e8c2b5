"""Deterministic numerics for the contact-tracing process CTP(b, p, alpha).

The central objects are the sequences

    g_0 = h_0 = s,
    g_n = s G(1 - a + a g_{n-1}),
    h_n = s a G'(1 - a + a g_{n-1}) h_{n-1},

evaluated at ``s = 1 - p``.  The expected number of cluster seeds emitted
at cluster age ``n`` is

    v_n = lam_U lam_T**(n-1)               for 1 <= n <= b,
    v_n = lam_U lam_T**b h_{n-b-1}(1 - p)  for n >= b + 1,

and the process dies out iff ``sum v_n <= 1`` (for ``p > 0``).  Every
truncated series here carries a certified tail bound derived from
``h_n(1-p) <= c1(p) (1-p)**n`` with ``c1(p) = 1 / (-e log(1-p))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .offspring import DomainError, OffspringDistribution

EXTINCT = "Extinct"
SURVIVES = "SurvivesWPP"

DEFAULT_TOL = 1e-10
FIXED_POINT_TOL = 1e-12
_N_START = 64
_N_LIMIT = 1 << 22


class NoCertifiedTruncation(ValueError):
    """The seed-mean series has no certified truncation (``p == 0``)."""


class ThetaUndefined(ValueError):
    """The transform never reaches 1 on the admissible bracket."""


@dataclass(frozen=True)
class CtpParams:
    b: int
    p: float
    alpha: float
    dist: OffspringDistribution

    def __post_init__(self) -> None:
        if int(self.b) != self.b or self.b < 0:
            raise DomainError(f"b must be a nonnegative integer, got {self.b!r}")
        for name in ("p", "alpha"):
            x = getattr(self, name)
            if not (0.0 <= x <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {x!r}")

    @property
    def lam(self) -> float:
        return self.dist.mean

    @property
    def lam_t(self) -> float:
        return self.lam * self.alpha

    @property
    def lam_u(self) -> float:
        return self.lam * (1.0 - self.alpha)

    def replace(self, **changes) -> "CtpParams":
        kw = dict(b=self.b, p=self.p, alpha=self.alpha, dist=self.dist)
        kw.update(changes)
        return CtpParams(**kw)

    def as_dict(self) -> dict:
        return {"offspring": self.dist.spec(), "b": self.b, "p": self.p, "alpha": self.alpha}


@dataclass
class AnalyticSequences:
    s: float
    g: np.ndarray
    h: np.ndarray
    w: np.ndarray
    v: np.ndarray  # v[0] is unused and set to 0
    tail_bound: float

    @property
    def n_max(self) -> int:
        return len(self.g) - 1

    @property
    def seed_mean(self) -> float:
        return math.fsum(self.v[1:])


@dataclass(frozen=True)
class ExtinctionVerdict:
    verdict: str
    seed_mean: float | None
    rule: str

    @property
    def extinct(self) -> bool:
        return self.verdict == EXTINCT


def c1(p: float) -> float:
    """``1 / (-e log(1 - p))``; bounds ``x (1-p)**x`` over ``x >= 0``."""
    if not (0.0 < p < 1.0):
        raise DomainError("c1 is defined for p in (0, 1)")
    return -1.0 / (math.e * math.log1p(-p))


def gh_recursion(dist: OffspringDistribution, alpha: float, s: float, n_max: int):
    """``(g_n(s), h_n(s))`` for ``0 <= n <= n_max``."""
    g = np.empty(n_max + 1)
    h = np.empty(n_max + 1)
    g[0] = h[0] = s
    for n in range(1, n_max + 1):
        u = min(1.0, 1.0 - alpha + alpha * g[n - 1])
        g[n] = s * dist.pgf(u)
        h[n] = s * alpha * dist.derivative(u, 1) * h[n - 1]
    return g, h


def _h_sum_bound(params: CtpParams, g: np.ndarray, h: np.ndarray, m0: int) -> float:
    """Bound on ``sum_{m >= m0} h_m(1-p)`` given ``g, h`` up to ``len(h) - 1 >= m0``.

    Two certified bounds are combined: the geometric envelope
    ``h_m <= c1(p) (1-p)**m`` and the ratio bound, which uses that
    ``h_{m+1} / h_m = s alpha G'(1 - alpha + alpha g_m)`` is nonincreasing in ``m``.
    """
    p = params.p
    best = c1(p) * (1.0 - p) ** m0 / p
    if h[m0] == 0.0:
        return 0.0
    u = min(1.0, 1.0 - params.alpha + params.alpha * g[m0])
    rho = (1.0 - p) * params.alpha * params.dist.derivative(u, 1)
    if rho < 1.0:
        best = min(best, h[m0] / (1.0 - rho))
    return best


def _tail(params: CtpParams, g: np.ndarray, h: np.ndarray) -> float:
    """Bound on ``sum_{n > n_max} v_n``."""
    p = params.p
    if p == 1.0 or params.lam_u == 0.0 or params.lam_t == 0.0 and params.b >= 1:
        return 0.0
    n_max = len(h) - 1
    m0 = n_max - params.b  # first omitted h index
    if m0 < 0:
        return math.inf
    return params.lam_u * params.lam_t**params.b * _h_sum_bound(params, g, h, m0)


def compute_sequences(params: CtpParams, n_max: int) -> AnalyticSequences:
    """Evaluate ``g, h, w, v`` up to index ``n_max`` with a certified tail bound."""
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    if params.p == 0.0:
        raise NoCertifiedTruncation("p = 0: the seed-mean series has no certified truncation")
    s = 1.0 - params.p
    g, h = gh_recursion(params.dist, params.alpha, s, n_max)
    v = np.zeros(n_max + 1)
    lam_u, lam_t, b = params.lam_u, params.lam_t, params.b
    for n in range(1, n_max + 1):
        if n <= b:
            v[n] = lam_u * lam_t ** (n - 1)
        else:
            v[n] = lam_u * lam_t**b * h[n - b - 1]
    return AnalyticSequences(s=s, g=g, h=h, w=h.copy(), v=v, tail_bound=_tail(params, g, h))


def certified_sequences(params: CtpParams, tol: float) -> AnalyticSequences:
    """Sequences long enough that the omitted tail of ``sum v_n`` is below ``tol``."""
    n = max(_N_START, params.b + 2)
    while True:
        seq = compute_sequences(params, n)
        if seq.tail_bound < tol:
            return seq
        if n >= _N_LIMIT:
            raise NoCertifiedTruncation(f"tail bound {seq.tail_bound:.3g} still above tol at n={n}")
        n *= 2


def seed_mean(params: CtpParams, tol: float = DEFAULT_TOL) -> float:
    """Mean number of cluster seeds produced by one cluster, ``y_b(p, alpha)``."""
    if params.p == 0.0:
        raise NoCertifiedTruncation("p = 0: the seed mean may diverge")
    return certified_sequences(params, tol).seed_mean


def classify_extinction(params: CtpParams, tol: float = DEFAULT_TOL) -> ExtinctionVerdict:
    lam, p, alpha, b = params.lam, params.p, params.alpha, params.b
    if lam <= 1.0:
        return ExtinctionVerdict(EXTINCT, None, "subcritical-base")
    if p == 0.0:
        return ExtinctionVerdict(SURVIVES, None, "no-detection")
    if alpha == 1.0:
        return ExtinctionVerdict(EXTINCT, 0.0, "full-tracing")
    if b == 0 and lam * (1.0 - p) <= 1.0:
        return ExtinctionVerdict(EXTINCT, None, "detected-offspring-subcritical")
    if b >= 1 and alpha == 0.0:
        return ExtinctionVerdict(SURVIVES, None, "no-tracing")
    y = seed_mean(params, tol)
    if abs(y - 1.0) <= tol:
        return ExtinctionVerdict(EXTINCT, y, "critical-within-tol")
    return ExtinctionVerdict(EXTINCT if y < 1.0 else SURVIVES, y, "seed-mean")


# -- Malthusian parameter ---------------------------------------------------

class _Transform:
    """``F(theta) = sum_n exp(-n theta) v_n`` with certified enclosures."""

    def __init__(self, params: CtpParams, tol: float):
        self.params = params
        self.tol = tol
        self.seq = certified_sequences(params, tol)

    def _tail(self, theta: float) -> float:
        pr, seq = self.params, self.seq
        if pr.p == 1.0 or pr.lam_u == 0.0 or (pr.lam_t == 0.0 and pr.b >= 1):
            return 0.0
        N = seq.n_max
        M = N - pr.b - 1  # last h index used by v
        if seq.h[M] == 0.0:
            return 0.0
        u = min(1.0, 1.0 - pr.alpha + pr.alpha * seq.g[M])
        rho = seq.s * pr.alpha * pr.dist.derivative(u, 1)
        x = rho * math.exp(-theta)
        if x >= 1.0:
            return math.inf
        lead = pr.lam_u * pr.lam_t**pr.b * seq.h[M]
        return lead * math.exp(-N * theta) * x / (1.0 - x)

    def enclosure(self, theta: float, decided=None) -> tuple[float, float]:
        """``(lower, upper)`` for ``F(theta)``; stops early once ``decided(lo, hi)``."""
        while True:
            v = self.seq.v
            n = np.arange(v.size)
            pos = v > 0
            terms = np.zeros(v.size)
            with np.errstate(over="ignore"):
                terms[pos] = np.exp(np.log(v[pos]) - n[pos] * theta)
            value = math.fsum(terms[1:])
            tail = self._tail(theta)
            if tail < self.tol or self.seq.n_max >= _N_LIMIT:
                return value, value + tail
            if decided is not None and decided(value, value + tail):
                return value, value + tail
            self.seq = compute_sequences(self.params, 2 * self.seq.n_max)

    def __call__(self, theta: float) -> float:
        lo, hi = self.enclosure(theta)
        return 0.5 * (lo + hi) if math.isfinite(hi) else hi


def laplace_transform(params: CtpParams, theta: float, tol: float = DEFAULT_TOL) -> float:
    """``sum_{n>=1} exp(-n theta) v_n`` (``inf`` when it diverges)."""
    return _Transform(params, tol)(theta)


def malthusian_theta(params: CtpParams, tol: float = DEFAULT_TOL) -> float:
    """Solve ``sum_n exp(-n theta) v_n = 1`` for ``theta`` by bisection."""
    if params.p == 0.0:
        raise NoCertifiedTruncation("p = 0: no certified transform")
    F = _Transform(params, tol)
    y = F.seq.seed_mean
    if abs(y - 1.0) <= tol:
        return 0.0

    def sign(theta: float) -> int:
        lo_val, hi_val = F.enclosure(theta, lambda lo_, hi_: lo_ > 1.0 or hi_ < 1.0)
        if lo_val > 1.0:
            return 1
        if hi_val < 1.0:
            return -1
        return 1 if 0.5 * (lo_val + hi_val) > 1.0 else -1

    if y > 1.0:
        lo, hi = 0.0, 1.0
        while sign(hi) > 0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e6:
                raise ThetaUndefined("transform does not drop below 1")
    else:
        hi = 0.0
        if params.p < 1.0:
            lo = math.log1p(-params.p) + 1e-9
            if sign(lo) < 0:
                raise ThetaUndefined("theta undefined (deep subcritical)")
        else:
            if not np.any(F.seq.v[1:] > 0):
                raise ThetaUndefined("theta undefined: no seeds are ever produced")
            lo = -1.0
            while sign(lo) < 0:
                lo *= 2.0
                if lo < -1e6:
                    raise ThetaUndefined("theta undefined (deep subcritical)")
    for _ in range(400):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if sign(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- critical curve ---------------------------------------------------------

def critical_alpha(dist: OffspringDistribution, b: int, p: float, tol: float = DEFAULT_TOL) -> float:
    """Threshold trace probability ``e_b(p)``.

    The bisection relies on monotonicity of the extinction set in ``alpha``;
    ``y_b`` itself need not be monotone.
    """
    if p == 0.0:
        warnings.warn("p = 0: e_b(0) = 1 by convention, though (b, 0, 1) survives", RuntimeWarning)
        return 1.0
    if not (0.0 < p <= 1.0):
        raise DomainError(f"p must lie in (0, 1], got {p!r}")
    inner_tol = min(tol, 1e-12) * 1e-2

    def survives(alpha: float) -> bool:
        pr = CtpParams(b, p, alpha, dist)
        if pr.lam <= 1.0:
            return False
        return seed_mean(pr, inner_tol) > 1.0

    if not survives(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    if survives(1.0 - 1e-15):
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if survives(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def f_b(lam: float, b: int, alpha: float) -> float:
    """Seed mean at ``p = 1``: ``lam (1 - alpha) sum_{n<b} (alpha lam)**n``."""
    if b < 1:
        raise DomainError("f_b needs b >= 1")
    return lam * (1.0 - alpha) * math.fsum((alpha * lam) ** n for n in range(b))


def alpha_crit_p1(lam: float, b: int, tol: float = DEFAULT_TOL) -> float:
    """Infimum of ``alpha`` with ``f_b(alpha) <= 1``."""
    if b < 1:
        raise DomainError("alpha_crit_p1 needs b >= 1")
    if lam <= 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f_b(lam, b, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def survival_sufficient_2crit(dist: OffspringDistribution, p: float, alpha: float) -> bool:
    """Two-term lower bound on the seed mean exceeds 1 (``b = 0``); sufficient for survival."""
    lam = dist.mean
    lhs = lam * (1 - p) * (1 - alpha) * (1 + alpha * (1 - p) * dist.derivative(1 - alpha * p, 1))
    return lhs > 1.0


def eb_bounds(dist: OffspringDistribution, b: int, p: float) -> tuple[float, float]:
    """Analytic sandwich ``lower <= e_b(p) <= upper``."""
    lam = dist.mean
    lower = 0.0
    if p < 1.0 and lam * (1.0 - p) > 1.0:
        lower = max(lower, 1.0 - 1.0 / (lam * (1.0 - p)))
    if b >= 1 and lam > 1.0:
        lower = max(lower, alpha_crit_p1(lam, b, 1e-13) - 1e-12)
        if 4 * b < lam**b:
            lower = max(lower, 1.0 - 2.0 * lam ** (-b))
    upper = 1.0 - p / lam if (b == 0 and p > 0.0) else 1.0
    return lower, min(1.0, upper)


def fixed_point(dist: OffspringDistribution, alpha: float, s: float, tol: float = FIXED_POINT_TOL) -> float:
    """Limit of ``g_n(s)``: the root of ``g = s G_T(g)`` reached by iteration."""
    g = s
    for _ in range(10_000_000):
        nxt = s * dist.pgf(min(1.0, 1.0 - alpha + alpha * g))
        if abs(nxt - g) < tol:
            return nxt
        g = nxt
    return g
