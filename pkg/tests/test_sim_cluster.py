import math

import numpy as np
import pytest
from scipy import stats

from ctrace import analytics as an
from ctrace import sim_cluster as sc
from ctrace import sim_direct as sd
from ctrace.analytics import CtpParams
from ctrace.offspring import OffspringDistribution
from ctrace.rng import trial_rng

POISSON = OffspringDistribution.poisson(2.5)


def P(b, p, alpha, dist=POISSON):
    return CtpParams(b, p, alpha, dist)


def within(sample, target, k=3.0):
    sample = np.asarray(sample, dtype=float)
    se = sample.std(ddof=1) / math.sqrt(sample.size)
    return abs(sample.mean() - target) <= k * se + 1e-12


def test_truncation_keeps_seeds_one_age_longer_than_members():
    rec = sc.ClusterRecord(b=1, vt=[1, 2, 3, 4], vu=[0, 5, 6, 7], detection_age=1)
    # members survive to age S + b - 1 = 1, seeds are counted up to age S + b = 2
    assert rec.truncated_vt == [1, 2, 0, 0]
    assert rec.truncated_vu == [0, 5, 6, 0]
    assert rec.seed_total == 11
    assert rec.terminated


def test_truncation_without_detection_keeps_everything():
    rec = sc.ClusterRecord(b=0, vt=[1, 2, 1], vu=[0, 1, 3])
    assert rec.truncated_vt == [1, 2, 1]
    assert rec.truncated_vu == [0, 1, 3]
    assert not rec.terminated


def test_root_detected_without_delay_emits_nothing():
    rec = sc.ClusterRecord(b=0, detection_age=0)
    assert rec.terminated
    assert rec.seed_total == 0
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert sc.sample_seed_offspring(P(0, 1.0, 0.4), rng)[0] == 0


def test_no_tracing_cluster_is_a_single_member():
    rng = np.random.default_rng(1)
    for _ in range(200):
        rec = sc.new_cluster(P(2, 0.5, 0.0), rng)
        while not rec.terminated:
            sc.advance_cluster(rec, P(2, 0.5, 0.0), rng)
        assert all(x == 0 for x in rec.vt[1:])
        assert sum(rec.truncated_vu[2:]) == 0


def test_advance_refuses_terminated_cluster():
    rec = sc.ClusterRecord(b=0, detection_age=0)
    with pytest.raises(ValueError):
        sc.advance_cluster(rec, P(0, 1.0, 0.3), np.random.default_rng(0))


def test_deterministic_offspring_with_full_detection():
    # two children each, delay 2: seeds at ages 1 and 2 from a line of retained members
    pr = CtpParams(2, 1.0, 0.5, OffspringDistribution.finite([0, 0, 1]))
    rng = np.random.default_rng(2)
    totals = [sc.sample_seed_offspring(pr, rng)[0] for _ in range(20_000)]
    assert within(totals, an.f_b(2.0, 2, 0.5))


@pytest.mark.parametrize("b", [1, 2, 3])
def test_full_detection_seed_mean(b):
    batch = sc.sample_seed_outputs(P(b, 1.0, 0.3), 1_000_000, np.random.default_rng(b))
    assert within(batch.totals, an.f_b(2.5, b, 0.3))
    if b == 1:
        assert an.f_b(2.5, 1, 0.3) == pytest.approx(1.75)


def test_seed_mean_matches_analytics():
    pr = P(0, 0.4, 0.6)
    batch = sc.sample_seed_outputs(pr, 1_000_000, np.random.default_rng(4))
    assert within(batch.totals, an.seed_mean(pr))


def test_emissions_by_age_match_analytics():
    pr = P(1, 0.4, 0.5)
    n = 1_000_000
    batch = sc.sample_seed_outputs(pr, n, np.random.default_rng(5))
    v = an.compute_sequences(pr, 8).v
    for age in range(1, 9):
        mean = batch.age_sum[age - 1] / n
        var = batch.age_sumsq[age - 1] / n - mean**2
        assert abs(mean - v[age]) <= 3 * math.sqrt(var / n) + 1e-12, age


def test_single_and_batch_samplers_agree():
    pr = P(1, 0.3, 0.5)
    rng = np.random.default_rng(6)
    single = [sc.sample_seed_offspring(pr, rng)[0] for _ in range(30_000)]
    batch = sc.sample_seed_outputs(pr, 30_000, np.random.default_rng(7)).totals
    t = stats.ttest_ind(single, batch, equal_var=False)
    assert t.pvalue > 1e-3


def test_sibling_clusters_uncorrelated():
    batch = sc.sample_seed_outputs(P(1, 0.4, 0.5), 400_000, np.random.default_rng(8))
    x = batch.totals[0::2].astype(float)
    y = batch.totals[1::2].astype(float)
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) < 3 / math.sqrt(x.size)


def test_age_cap():
    pr = CtpParams(0, 1e-9, 1.0, OffspringDistribution.finite([0, 1]))
    with pytest.raises(sc.AgeCapExceeded):
        sc.sample_seed_offspring(pr, np.random.default_rng(0), age_cap=50)


def test_p_zero_rejected():
    with pytest.raises(ValueError):
        sc.sample_seed_offspring(P(1, 0.0, 0.5), np.random.default_rng(0))


def test_run_full_detection_without_delay_is_empty():
    for i in range(20):
        tr = sc.run(P(0, 1.0, 0.3), 4, trial_rng(1, i))
        assert tr.ZCT[0] == 0 and tr.extinct


def test_run_has_no_pre_tracing_column():
    tr = sc.run(P(1, 0.3, 0.3), 4, trial_rng(1, 0))
    assert tr.Z is None
    assert tr.to_csv().splitlines()[0] == "n,Z,ZCT,R0"


def _contingency_p(a, c):
    top = int(np.percentile(np.concatenate([a, c]), 95))
    edges = np.arange(0, top + 2)
    ha = np.histogram(np.minimum(a, top + 1), bins=np.append(edges, top + 2))[0]
    hc = np.histogram(np.minimum(c, top + 1), bins=np.append(edges, top + 2))[0]
    table = np.array([ha, hc])
    table = table[:, table.sum(axis=0) > 0]
    return stats.chi2_contingency(table).pvalue


def test_no_tracing_law_matches_direct_simulation():
    pr = P(1, 0.4, 0.0)
    n = 3000
    direct = np.array([sd.run(pr, 3, trial_rng(11, i), track_untreated=False).ZCT[3] for i in range(n)])
    cluster = np.array([sc.run(pr, 3, trial_rng(12, i)).ZCT[3] for i in range(n)])
    assert _contingency_p(direct, cluster) > 1e-3


def test_thinning_is_unbiased():
    pr = P(1, 0.4, 0.2)
    n, h = 2000, 8
    exact = np.array([sc.run(pr, h, trial_rng(13, i)).ZCT[h] for i in range(n)], dtype=float)
    thin = np.array([sc.run(pr, h, trial_rng(14, i), thin_above=40).ZCT[h] for i in range(n)], dtype=float)
    se = math.sqrt(exact.var(ddof=1) / n + thin.var(ddof=1) / n)
    assert abs(exact.mean() - thin.mean()) < 3 * se


def test_seed_counts_grow_at_malthusian_rate():
    pr = P(1, 0.4, 0.2)
    theta = an.malthusian_theta(pr)
    rates = []
    for i in range(200):
        tr = sc.run(pr, 30, trial_rng(15, i), thin_above=20_000)
        if tr.R0[30] > 0:
            rates.append(math.log(tr.R0[30]) / 30)
    assert len(rates) > 100
    assert abs(np.mean(rates) - theta) < 0.05


def test_martingale_mean_is_flat():
    pr = P(0, 0.4, 0.55)
    theta = an.malthusian_theta(pr)
    Y = sc.martingale_paths(pr, theta, 15, 10_000, np.random.default_rng(16))
    assert np.all(Y[:, 0] == 1.0)
    # slope per path, then a confidence interval across independent paths
    n = np.arange(16)
    x = n - n.mean()
    slopes = (Y * x).sum(axis=1) / (x * x).sum()
    se = slopes.std(ddof=1) / math.sqrt(slopes.size)
    assert abs(slopes.mean()) < 1.96 * se
