import numpy as np

from ctrace import validation


def test_pooled_chi2_accepts_identical_laws():
    rng = np.random.default_rng(0)
    a, c = rng.poisson(3.0, 5000), rng.poisson(3.0, 5000)
    assert validation.pooled_chi2(a, c) > 1e-3


def test_pooled_chi2_rejects_different_laws():
    rng = np.random.default_rng(0)
    a, c = rng.poisson(3.0, 5000), rng.poisson(3.4, 5000)
    assert validation.pooled_chi2(a, c) < 1e-3


def test_near_critical_ratio_tends_to_square_root_candidate():
    values = validation.near_critical_ratios()
    diffs = np.abs(np.diff(values))
    assert np.all(diffs[1:] < diffs[:-1])
    assert abs(values[-1] - np.sqrt(5 / 3)) < abs(values[-1] - 5 / 3)


def test_result_line_format():
    res = validation.CriterionResult(3, "name", True, "detail", 1.5)
    assert res.line() == "[PASS]  3 name: detail (1.5s)"
