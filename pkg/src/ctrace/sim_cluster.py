"""Cluster-level simulator.

Every cluster seed starts a traceable cluster that grows as a branching
process with mean ``lam * alpha``.  Let ``S`` be the first cluster age at
which some member is detected.  Members of ages up to ``S + b - 1`` stay in
the population and reproduce; the whole cluster is removed at age ``S + b``,
but the untraceable children born at that age survive as new seeds.  That
asymmetry is why the two truncations below differ by one.

Detection indicators are drawn when members are born (a generation of ``k``
undetected members contains a detected one with probability ``1 - (1-p)**k``),
which has the same law as testing each member at age ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytics import CtpParams
from .trajectory import Trajectory

NEVER = np.iinfo(np.int64).max // 4
DEFAULT_CAP = 10_000_000
AGE_CAP = 100_000


class ExplosionCap(RuntimeError):
    def __init__(self, message: str, trajectory: Trajectory | None = None):
        super().__init__(message)
        self.trajectory = trajectory


class AgeCapExceeded(RuntimeError):
    pass


# -- single cluster records -------------------------------------------------

@dataclass
class ClusterRecord:
    b: int
    birth_generation: int = 0
    vt: list = field(default_factory=lambda: [1])
    vu: list = field(default_factory=lambda: [0])
    detection_age: int | None = None

    @property
    def age(self) -> int:
        return len(self.vt) - 1

    @property
    def truncated_vt(self) -> list:
        s = NEVER if self.detection_age is None else self.detection_age
        return [x if n <= s + self.b - 1 else 0 for n, x in enumerate(self.vt)]

    @property
    def truncated_vu(self) -> list:
        s = NEVER if self.detection_age is None else self.detection_age
        return [x if 1 <= n <= s + self.b else 0 for n, x in enumerate(self.vu)]

    @property
    def terminated(self) -> bool:
        return self.truncated_vt[-1] == 0

    @property
    def seed_total(self) -> int:
        return sum(self.truncated_vu)


def new_cluster(params: CtpParams, rng: np.random.Generator, birth_generation: int = 0) -> ClusterRecord:
    rec = ClusterRecord(params.b, birth_generation)
    if rng.random() < params.p:
        rec.detection_age = 0
    return rec


def advance_cluster(record: ClusterRecord, params: CtpParams, rng: np.random.Generator) -> ClusterRecord:
    """Grow the cluster by one generation (in place)."""
    if record.terminated:
        raise ValueError("cluster already terminated")
    members = record.vt[-1]
    total = int(params.dist.sample_sum(np.array([members]), rng)[0])
    t = int(rng.binomial(total, params.alpha))
    record.vt.append(t)
    record.vu.append(total - t)
    if record.detection_age is None and t > 0 and rng.random() < 1.0 - (1.0 - params.p) ** t:
        record.detection_age = record.age
    return record


def sample_seed_offspring(params: CtpParams, rng: np.random.Generator, age_cap: int = AGE_CAP):
    """Run one cluster to termination; return ``(total seeds, seeds per age)``."""
    if params.p <= 0.0:
        raise ValueError("p must be positive for clusters to terminate")
    rec = new_cluster(params, rng)
    while not rec.terminated:
        if rec.age >= age_cap:
            raise AgeCapExceeded(f"cluster still alive at age {age_cap}")
        advance_cluster(rec, params, rng)
    per_age = rec.truncated_vu[1:]
    return int(sum(per_age)), per_age


# -- vectorised batches of independent clusters ------------------------------

@dataclass
class SeedBatch:
    totals: np.ndarray
    age_sum: np.ndarray  # age_sum[n - 1] = sum over clusters of seeds emitted at age n
    age_sumsq: np.ndarray
    by_age: np.ndarray | None = None  # clusters x ages, when requested

    @property
    def n(self) -> int:
        return self.totals.size


def _grow(params: CtpParams, vt, sdet, age, rng):
    """One generation for arrays of producing clusters; returns (vt', emitted, sdet')."""
    total = params.dist.sample_sum(vt, rng)
    t = rng.binomial(total, params.alpha)
    u = total - t
    new_age = age + 1
    fresh = (sdet == NEVER) & (t > 0)
    if fresh.any():
        hit = rng.random(int(fresh.sum())) < -np.expm1(t[fresh] * np.log1p(-params.p)) if params.p < 1 \
            else np.ones(int(fresh.sum()), dtype=bool)
        idx = np.flatnonzero(fresh)[hit]
        sdet = sdet.copy()
        sdet[idx] = new_age[idx] if np.ndim(new_age) else new_age
    keep = new_age <= sdet + params.b - 1
    return np.where(keep, t, 0), u, sdet


def _seed_detection(params: CtpParams, n: int, rng) -> np.ndarray:
    sdet = np.full(n, NEVER, dtype=np.int64)
    if params.p > 0:
        sdet[rng.random(n) < params.p] = 0
    return sdet


def sample_seed_outputs(params: CtpParams, n: int, rng: np.random.Generator, *,
                        keep_by_age: bool = False, age_cap: int = AGE_CAP) -> SeedBatch:
    """Simulate ``n`` independent clusters to termination."""
    if params.p <= 0.0:
        raise ValueError("p must be positive for clusters to terminate")
    totals = np.zeros(n, dtype=np.int64)
    sdet = _seed_detection(params, n, rng)
    vt = np.where(0 <= sdet + params.b - 1, 1, 0).astype(np.int64)
    idx = np.flatnonzero(vt > 0)
    vt, sdet = vt[idx], sdet[idx]
    sums, sumsq, cols = [], [], []
    age = 0
    while idx.size:
        if age >= age_cap:
            raise AgeCapExceeded(f"clusters still alive at age {age_cap}")
        vt, u, sdet = _grow(params, vt, sdet, np.full(idx.size, age, dtype=np.int64), rng)
        age += 1
        totals[idx] += u
        uf = u.astype(np.float64)
        sums.append(uf.sum())
        sumsq.append((uf * uf).sum())
        if keep_by_age:
            col = np.zeros(n, dtype=np.int64)
            col[idx] = u
            cols.append(col)
        live = vt > 0
        idx, vt, sdet = idx[live], vt[live], sdet[live]
    by_age = np.stack(cols, axis=1) if keep_by_age and cols else (np.zeros((n, 0), dtype=np.int64) if keep_by_age else None)
    return SeedBatch(totals, np.array(sums), np.array(sumsq), by_age)


# -- whole-process simulation -------------------------------------------------

@dataclass
class ClusterSimState:
    current_time: int
    vt: np.ndarray  # current retained members of each active cluster
    age: np.ndarray
    sdet: np.ndarray  # detection age, NEVER if none yet
    birth: np.ndarray
    weight: float = 1.0
    zct: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.vt.size


def init(params: CtpParams, rng: np.random.Generator) -> ClusterSimState:
    sdet = _seed_detection(params, 1, rng)
    vt = np.where(0 <= sdet + params.b - 1, 1, 0).astype(np.int64)
    st = ClusterSimState(0, vt, np.zeros(1, dtype=np.int64), sdet, np.zeros(1, dtype=np.int64))
    st.zct.append(int(vt.sum()))
    st.seeds.append(int(vt.sum()))
    _prune(st)
    return st


def _prune(st: ClusterSimState) -> None:
    live = st.vt > 0
    if not live.all():
        st.vt, st.age, st.sdet, st.birth = st.vt[live], st.age[live], st.sdet[live], st.birth[live]


def step(st: ClusterSimState, params: CtpParams, rng: np.random.Generator, *,
         cap: int = DEFAULT_CAP, thin_above: int | None = None) -> ClusterSimState:
    n = st.current_time + 1
    vt, u, sdet = _grow(params, st.vt, st.sdet, st.age, rng)
    n_seeds = int(u.sum())
    seed_sdet = _seed_detection(params, n_seeds, rng)
    seed_vt = np.where(0 <= seed_sdet + params.b - 1, 1, 0).astype(np.int64)
    st.vt = np.concatenate([vt, seed_vt])
    st.age = np.concatenate([st.age + 1, np.zeros(n_seeds, dtype=np.int64)])
    st.sdet = np.concatenate([sdet, seed_sdet])
    st.birth = np.concatenate([st.birth, np.full(n_seeds, n, dtype=np.int64)])
    st.current_time = n
    zct = int(st.vt.sum())
    alive_seeds = int(seed_vt.sum())
    if st.weight == 1.0:
        st.zct.append(zct)
        st.seeds.append(alive_seeds)
    else:
        st.zct.append(st.weight * zct)
        st.seeds.append(st.weight * alive_seeds)
    _prune(st)
    if thin_above is not None and st.n_clusters > thin_above:
        keep_prob = 0.5 * thin_above / st.n_clusters
        keep = rng.random(st.n_clusters) < keep_prob
        st.vt, st.age, st.sdet, st.birth = st.vt[keep], st.age[keep], st.sdet[keep], st.birth[keep]
        st.weight /= keep_prob
    elif thin_above is None and zct > cap:
        raise ExplosionCap(f"population {zct} exceeds cap {cap} at generation {n}")
    return st


def run(params: CtpParams, horizon: int, rng: np.random.Generator, *,
        cap: int = DEFAULT_CAP, thin_above: int | None = None) -> Trajectory:
    """Simulate ``horizon`` generations.

    With ``thin_above`` set, the active clusters are independently subsampled
    whenever their number exceeds it and the survivors carry the inverse
    keep probability as a weight, so recorded sizes become unbiased
    estimates.  Without it the run is exact and stops at ``cap``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    st = init(params, rng)
    weights = [1.0]
    for _ in range(horizon):
        try:
            step(st, params, rng, cap=cap, thin_above=thin_above)
        except ExplosionCap as exc:
            exc.trajectory = Trajectory(ZCT=st.zct, R0=st.seeds, weight=weights)
            raise
        weights.append(st.weight)
    return Trajectory(ZCT=st.zct, R0=st.seeds, weight=weights)


def martingale_paths(params: CtpParams, theta: float, horizon: int, trials: int,
                     rng: np.random.Generator) -> np.ndarray:
    """``Y_n = exp(-theta n) sum_k R_n(k) exp(-k theta)`` for ``0 <= n <= horizon``.

    ``R_n(k)`` counts seeds that will appear ``k`` generations after ``n``
    from clusters whose seed was born before ``n``.  Each seed's entire
    output sequence is drawn when it is born.  Returns a ``trials x
    (horizon + 1)`` array.
    """
    Y = np.zeros((trials, horizon + 1))
    Y[:, 0] = 1.0
    births = np.zeros((trials, horizon + 1), dtype=np.int64)
    births[:, 0] = 1
    for m in range(horizon):
        counts = births[:, m]
        total = int(counts.sum())
        if total == 0:
            continue
        owner = np.repeat(np.arange(trials), counts)
        batch = sample_seed_outputs(params, total, rng, keep_by_age=True)
        A = batch.by_age  # A[:, j - 1] = seeds at age j
        J = A.shape[1]
        if J == 0:
            continue
        j = np.arange(1, J + 1)
        disc = A * np.exp(-(m + j) * theta)
        # tail[:, r] = sum over ages j >= r + 1
        tail = np.cumsum(disc[:, ::-1], axis=1)[:, ::-1]
        for n in range(m + 1, horizon + 1):
            r = n - m - 1
            if r >= J:
                break
            np.add.at(Y[:, n], owner, tail[:, r])
        for jj in range(1, J + 1):
            t = m + jj
            if t > horizon:
                break
            np.add.at(births[:, t], owner, A[:, jj - 1])
    return Y
