import math

import numpy as np
import pytest

from ctrace import analytics as an
from ctrace import montecarlo as mc
from ctrace.analytics import CtpParams
from ctrace.offspring import DomainError, OffspringDistribution

POISSON = OffspringDistribution.poisson(2.5)


def P(b, p, alpha, dist=POISSON):
    return CtpParams(b, p, alpha, dist)


def plain_extinction(dist, iters=500):
    q = 0.0
    for _ in range(iters):
        q = dist.pgf(q)
    return q


def test_estimate_intervals():
    e = mc.Estimate.from_moments(10.0, 30.0, 5)
    assert e.value == 2.0
    assert e.ci95 == pytest.approx((e.value - 1.96 * e.stderr, e.value + 1.96 * e.stderr))
    w = mc.Estimate.proportion(100, 100)
    assert w.value == 1.0 and w.stderr == 0.0
    assert w.ci95[1] == 1.0 and w.ci95[0] < 1.0
    assert mc.Estimate.proportion(0, 100).ci95[0] == 0.0


def test_extinction_certain_under_full_detection():
    e = mc.estimate_extinction_probability(P(0, 1.0, 1.0), 5, 200, 1)
    assert e.value == 1.0


def test_extinction_without_detection_matches_plain_branching():
    q = plain_extinction(POISSON)
    assert q == pytest.approx(0.1074, abs=1e-4)
    e = mc.estimate_extinction_probability(P(1, 0.0, 0.3), 50, 1000, 2)
    assert abs(e.z_score(q)) < 3


def test_extinction_needs_trials():
    with pytest.raises(DomainError):
        mc.estimate_extinction_probability(P(0, 0.5, 0.5), 5, 50, 1)


def test_extinction_frequency_grows_with_horizon():
    pr = P(0, 0.4, 0.7)
    assert an.classify_extinction(pr).extinct
    short = mc.estimate_extinction_probability(pr, 10, 1000, 3)
    long = mc.estimate_extinction_probability(pr, 60, 1000, 3)
    assert long.value > short.value - 3 * short.stderr
    # trial streams are shared, so runs extinct by 10 stay extinct by 60
    assert long.value >= short.value


def test_bracketing_around_critical_curve():
    e0 = an.critical_alpha(POISSON, 0, 0.4, 1e-8)
    below = mc.estimate_extinction_probability(P(0, 0.4, e0 - 0.05), 60, 1000, 4)
    above = mc.estimate_extinction_probability(P(0, 0.4, e0 + 0.05), 60, 1000, 5)
    survival = 1 - below.value
    assert survival > 5 * below.stderr
    assert above.value >= 0.99


def test_growth_without_tracing_is_log_lambda():
    e = mc.estimate_growth_rate(P(1, 0.4, 0.0), 30, 570, window_start=10, master_seed=6)
    assert e.trials >= 500
    assert abs(e.value - math.log(2.5)) < 0.05


def test_growth_without_detection_is_log_lambda():
    e = mc.estimate_growth_rate(P(0, 0.0, 0.5), 30, 200, window_start=10, master_seed=7)
    assert abs(e.value - math.log(2.5)) < 0.05


def test_growth_tracks_malthusian_parameter():
    pr = P(1, 0.4, 0.2)
    e = mc.estimate_growth_rate(pr, 30, 200, window_start=10, master_seed=8)
    assert abs(e.value - an.malthusian_theta(pr)) < 0.05


def test_growth_rejects_bad_window():
    with pytest.raises(DomainError):
        mc.estimate_growth_rate(P(1, 0.4, 0.2), 10, 10, window_start=10)


def test_growth_without_survivors_errors():
    with pytest.raises(RuntimeError):
        mc.estimate_growth_rate(P(0, 1.0, 1.0), 5, 20, master_seed=1)


def test_vn_prefix_and_first_tail_term():
    pr = P(2, 0.4, 0.5)
    est = mc.estimate_vn(pr, 3, 200_000, 9)
    expected = [1.25, 1.25 * 1.25, 1.25 * 1.25**2 * 0.6]
    for e, v in zip(est, expected):
        assert abs(e.z_score(v)) < 3


def test_vn_zero_under_full_tracing():
    assert all(e.value == 0.0 for e in mc.estimate_vn(P(1, 0.4, 1.0), 5, 10_000, 10))


def test_vn_requires_detection():
    with pytest.raises(DomainError):
        mc.estimate_vn(P(1, 0.0, 0.5), 3, 100, 1)


def test_seed_mean_estimate():
    pr = P(1, 0.3, 0.5)
    e = mc.estimate_seed_mean(pr, 300_000, 11)
    assert abs(e.z_score(an.seed_mean(pr))) < 3


def test_determinism():
    pr = P(1, 0.4, 0.3)
    assert mc.estimate_seed_mean(pr, 100_000, 5) == mc.estimate_seed_mean(pr, 100_000, 5)
    a = mc.estimate_extinction_probability(pr, 15, 200, 5)
    b = mc.estimate_extinction_probability(pr, 15, 200, 5)
    assert (a.value, a.stderr, a.ci95) == (b.value, b.stderr, b.ci95)
    g1 = mc.estimate_growth_rate(pr, 15, 50, master_seed=5)
    g2 = mc.estimate_growth_rate(pr, 15, 50, master_seed=5)
    assert g1.value == g2.value and g1.stderr == g2.stderr


def test_seeds_change_results():
    pr = P(1, 0.4, 0.3)
    assert mc.estimate_seed_mean(pr, 10_000, 1).value != mc.estimate_seed_mean(pr, 10_000, 2).value


# -- enumeration oracle ------------------------------------------------------------

def test_oracle_single_child_line_emits_nothing():
    for p in (0.2, 0.7):
        value, err = mc.oracle_seed_mean_small(OffspringDistribution.finite([0, 1]), 0, p, 1.0)
        assert value == 0.0 and err == 0.0


def test_oracle_full_detection_without_delay():
    value, err = mc.oracle_seed_mean_small(OffspringDistribution.finite([0.5, 0.5]), 0, 1.0, 0.4)
    assert value == 0.0 and err == 0.0


def test_oracle_matches_analytics_critical_offspring():
    dist = OffspringDistribution.finite([0.25, 0.5, 0.25])
    value, err = mc.oracle_seed_mean_small(dist, 1, 0.5, 0.5)
    assert abs(value - an.seed_mean(CtpParams(1, 0.5, 0.5, dist))) <= err + 1e-10


def test_oracle_single_path_by_hand():
    # one member, at most one child; the child is traceable with probability alpha
    # b = 0: the root is detected with prob p (output 0); else it emits (1 - alpha) q,
    # and a traceable child continues only if it is not detected
    q, alpha, p = 0.6, 0.3, 0.5
    dist = OffspringDistribution.finite([1 - q, q])
    value, _ = mc.oracle_seed_mean_small(dist, 0, p, alpha, depth_cap=12)
    r = (1 - p) * q * alpha
    expected = (1 - p) * q * (1 - alpha) * (1 - r**12) / (1 - r)
    assert value == pytest.approx(expected, abs=1e-12)


SMALL = [
    ([0.25, 0.5, 0.25], 0, 0.3, 0.5),
    ([0.25, 0.5, 0.25], 1, 0.5, 0.5),
    ([0.1, 0.3, 0.6], 0, 0.5, 0.4),
    ([0.1, 0.3, 0.6], 1, 0.6, 0.3),
    ([0.2, 0.4, 0.4], 0, 0.7, 0.6),
    ([0.2, 0.4, 0.4], 1, 0.8, 0.2),
    ([0.5, 0.0, 0.5], 1, 0.4, 0.7),
    ([0.0, 0.5, 0.5], 0, 0.9, 0.5),
    ([0.3, 0.7], 1, 0.2, 0.9),
    ([0.1, 0.2, 0.7], 0, 1.0, 0.5),
    ([0.1, 0.2, 0.7], 1, 1.0, 0.5),
    ([0.4, 0.3, 0.3], 0, 0.05, 0.2),
]


@pytest.mark.parametrize("w,b,p,alpha", SMALL)
def test_oracle_agrees_with_analytics(w, b, p, alpha):
    dist = OffspringDistribution.finite(w)
    value, err = mc.oracle_seed_mean_small(dist, b, p, alpha)
    tol = 1e-10
    assert abs(value - an.seed_mean(CtpParams(b, p, alpha, dist), tol)) <= err + tol


@pytest.mark.parametrize("kw", [
    dict(dist=OffspringDistribution.finite([0.25, 0.25, 0.25, 0.25]), b=0, p=0.5, alpha=0.5),
    dict(dist=OffspringDistribution.finite([0.5, 0.5]), b=2, p=0.5, alpha=0.5),
    dict(dist=OffspringDistribution.finite([0.5, 0.5]), b=0, p=0.5, alpha=0.5, depth_cap=13),
    dict(dist=OffspringDistribution.finite([0.5, 0.5]), b=0, p=0.0, alpha=0.5),
])
def test_oracle_preconditions(kw):
    with pytest.raises(DomainError):
        mc.oracle_seed_mean_small(**kw)


def test_enumeration_cap():
    with pytest.raises(RuntimeError):
        mc.enumerate_emissions(np.array([0.0, 0.0, 0.0, 1.0]), 0, 0.01, 1.0, depth_cap=12, cap=1000)
