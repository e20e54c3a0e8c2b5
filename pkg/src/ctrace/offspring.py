"""Offspring laws for the underlying Galton-Watson process.

Four families are supported. The geometric law counts failures before the
first success, ``p_k = q (1 - q)**k`` for ``k >= 0``, so its mean is
``(1 - q) / q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("poisson", "geometric", "binomial", "pmf")
_PMF_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _check_unit(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")


@dataclass(frozen=True)
class OffspringDistribution:
    """A proper offspring law ``(p_k)``.

    Build instances with the class constructors (:meth:`poisson`,
    :meth:`geometric`, :meth:`binomial`, :meth:`finite`) or :func:`parse`.
    """

    kind: str
    params: tuple = ()
    weights: tuple = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown offspring kind {self.kind!r}")
        if self.kind == "poisson":
            (lam,) = self.params
            if not (lam > 0 and math.isfinite(lam)):
                raise DomainError("poisson mean must be positive and finite")
        elif self.kind == "geometric":
            (q,) = self.params
            if not (0.0 < q < 1.0):
                raise DomainError("geometric success probability must lie in (0, 1)")
        elif self.kind == "binomial":
            n, q = self.params
            if int(n) != n or n < 1:
                raise DomainError("binomial size must be a positive integer")
            _check_unit("binomial probability", q)
        else:
            w = self.weights
            if len(w) == 0:
                raise DomainError("pmf needs at least one weight")
            if any(x < 0 or not math.isfinite(x) for x in w):
                raise DomainError("pmf weights must be nonnegative and finite")
            if abs(math.fsum(w) - 1.0) > _PMF_TOL:
                raise DomainError(f"pmf weights sum to {math.fsum(w)!r}, not 1")

    # -- constructors -----------------------------------------------------
    @classmethod
    def poisson(cls, lam: float) -> "OffspringDistribution":
        return cls("poisson", (float(lam),))

    @classmethod
    def geometric(cls, q: float) -> "OffspringDistribution":
        return cls("geometric", (float(q),))

    @classmethod
    def binomial(cls, n: int, q: float) -> "OffspringDistribution":
        return cls("binomial", (int(n), float(q)))

    @classmethod
    def finite(cls, weights) -> "OffspringDistribution":
        w = tuple(float(x) for x in weights)
        # trailing zeros carry no information and only slow Horner down
        while len(w) > 1 and w[-1] == 0.0:
            w = w[:-1]
        return cls("pmf", (), w)

    # -- summaries --------------------------------------------------------
    @property
    def mean(self) -> float:
        if self.kind == "poisson":
            return self.params[0]
        if self.kind == "geometric":
            q = self.params[0]
            return (1.0 - q) / q
        if self.kind == "binomial":
            n, q = self.params
            return n * q
        return math.fsum(k * w for k, w in enumerate(self.weights))

    @property
    def second_factorial_moment(self) -> float:
        """``G''(1) = E[X (X - 1)]``."""
        return self.derivative(1.0, 2)

    @property
    def max_support(self) -> int | None:
        """Largest possible offspring count, or ``None`` if unbounded."""
        if self.kind == "binomial":
            return self.params[0]
        if self.kind == "pmf":
            return len(self.weights) - 1
        return None

    def spec(self) -> str:
        """Inverse of :func:`parse`."""
        if self.kind == "poisson":
            return f"poisson:{self.params[0]:g}"
        if self.kind == "geometric":
            return f"geometric:{self.params[0]:g}"
        if self.kind == "binomial":
            return f"binomial:{self.params[0]}:{self.params[1]:g}"
        return "pmf:" + ",".join(f"{w:g}" for w in self.weights)

    def pmf(self, k_max: int) -> np.ndarray:
        """Probabilities ``p_0 .. p_{k_max}``."""
        k = np.arange(k_max + 1)
        if self.kind == "poisson":
            lam = self.params[0]
            logp = -lam + k * math.log(lam) - np.array([math.lgamma(i + 1) for i in k])
            return np.exp(logp)
        if self.kind == "geometric":
            q = self.params[0]
            return q * (1.0 - q) ** k
        if self.kind == "binomial":
            n, q = self.params
            out = np.zeros(k_max + 1)
            kk = np.arange(min(n, k_max) + 1)
            out[: kk.size] = np.array([math.comb(n, int(i)) for i in kk]) * q**kk * (1 - q) ** (n - kk)
            return out
        out = np.zeros(k_max + 1)
        w = np.asarray(self.weights)
        m = min(w.size, k_max + 1)
        out[:m] = w[:m]
        return out

    # -- generating function ----------------------------------------------
    def pgf(self, u: float) -> float:
        """``G(u) = sum_k p_k u**k`` on ``[0, 1]``."""
        _check_unit("u", u)
        if self.kind == "poisson":
            return math.exp(self.params[0] * (u - 1.0))
        if self.kind == "geometric":
            q = self.params[0]
            return q / (1.0 - (1.0 - q) * u)
        if self.kind == "binomial":
            n, q = self.params
            return (1.0 - q + q * u) ** n
        return float(np.polyval(self.weights[::-1], u))

    def derivative(self, u: float, order: int = 1) -> float:
        """``G'(u)`` or ``G''(u)``; only orders 1 and 2 are supported."""
        if order not in (1, 2):
            raise DomainError(f"derivative order must be 1 or 2, got {order!r}")
        _check_unit("u", u)
        if self.kind == "poisson":
            lam = self.params[0]
            return lam**order * math.exp(lam * (u - 1.0))
        if self.kind == "geometric":
            q = self.params[0]
            d = 1.0 - (1.0 - q) * u
            if order == 1:
                return q * (1.0 - q) / d**2
            return 2.0 * q * (1.0 - q) ** 2 / d**3
        if self.kind == "binomial":
            n, q = self.params
            base = 1.0 - q + q * u
            if order == 1:
                return n * q * base ** (n - 1)
            return n * (n - 1) * q * q * base ** (n - 2) if n >= 2 else 0.0
        coeffs = np.polyder(np.asarray(self.weights[::-1]), order)
        return float(np.polyval(coeffs, u)) if coeffs.size else 0.0

    # -- sampling ---------------------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        """Independent offspring counts."""
        if self.kind == "poisson":
            return rng.poisson(self.params[0], size)
        if self.kind == "geometric":
            # numpy counts trials up to and including the first success
            return rng.geometric(self.params[0], size) - 1
        if self.kind == "binomial":
            n, q = self.params
            return rng.binomial(n, q, size)
        w = np.asarray(self.weights)
        return rng.choice(w.size, size=size, p=w / w.sum())

    def sample_sum(self, counts, rng: np.random.Generator) -> np.ndarray:
        """Total offspring of ``counts[i]`` independent parents, elementwise."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.kind == "poisson":
            return rng.poisson(self.params[0] * counts)
        if self.kind == "binomial":
            n, q = self.params
            return rng.binomial(n * counts, q)
        if self.kind == "geometric":
            out = np.zeros(counts.shape, dtype=np.int64)
            pos = counts > 0
            if pos.any():
                out[pos] = rng.negative_binomial(counts[pos], self.params[0])
            return out
        w = np.asarray(self.weights)
        if w.size == 1:
            return np.zeros(counts.shape, dtype=np.int64)
        draws = rng.multinomial(counts, w / w.sum())
        return draws @ np.arange(w.size)

    def inverse_cdf(self, u: float) -> int:
        """Smallest ``k`` with ``P(X <= k) > u`` for a uniform ``u`` in ``[0, 1)``."""
        if self.kind == "geometric":
            q = self.params[0]
            return int(math.floor(math.log1p(-u) / math.log1p(-q)))
        if self.kind == "poisson":
            lam = self.params[0]
            k, term = 0, math.exp(-lam)
            cum = term
            while cum <= u:
                k += 1
                term *= lam / k
                cum += term
                if term == 0.0 and k > lam:
                    break
            return k
        limit = self.max_support
        cum = 0.0
        probs = self.pmf(limit)
        for k in range(limit + 1):
            cum += probs[k]
            if cum > u:
                return k
        return limit


def parse(text: str) -> OffspringDistribution:
    """Parse ``poisson:2.5``, ``geometric:0.4``, ``binomial:4:0.6`` or ``pmf:0.1,0.3,0.6``."""
    head, _, rest = text.strip().partition(":")
    head = head.lower()
    try:
        if head == "poisson":
            return OffspringDistribution.poisson(float(rest))
        if head == "geometric":
            return OffspringDistribution.geometric(float(rest))
        if head == "binomial":
            n, q = rest.split(":")
            return OffspringDistribution.binomial(int(n), float(q))
        if head == "pmf":
            return OffspringDistribution.finite(float(x) for x in rest.split(","))
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"cannot parse offspring spec {text!r}: {exc}") from None
    raise DomainError(f"unknown offspring spec {text!r}")


def pgf(dist: OffspringDistribution, u: float) -> float:
    return dist.pgf(u)


def pgf_derivative(dist: OffspringDistribution, u: float, order: int = 1) -> float:
    return dist.derivative(u, order)


def thinned_pgf(dist: OffspringDistribution, alpha: float, u: float) -> float:
    """Generating function of the traceable offspring count, ``G(1 - alpha + alpha u)``."""
    _check_unit("alpha", alpha)
    _check_unit("u", u)
    return dist.pgf(min(1.0, 1.0 - alpha + alpha * u))


def sample_offspring_split(dist: OffspringDistribution, alpha: float, rng: np.random.Generator, size=None):
    """Draw ``(traceable, untraceable)`` offspring counts.

    The total follows ``dist`` and the traceable part is ``Binomial(total, alpha)``.
    """
    _check_unit("alpha", alpha)
    total = dist.sample(rng, size)
    vt = rng.binomial(total, alpha)
    vu = total - vt
    if size is None:
        return int(vt), int(vu)
    return vt, vu
