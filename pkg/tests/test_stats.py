import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from excursion_lab.stats import (DegenerateSample, NonPositiveInput, SparseCells, TestReport,
                                 binned_counts, chi_square_independence, continuity_modulus,
                                 effective_size, jittered, ks_two_sample, loglog_slope,
                                 write_reports)


def test_ks_examples():
    x = np.random.default_rng(0).standard_normal(500)
    assert ks_two_sample(x, x).statistic == 0
    zeros_ones = np.repeat([0.0, 1.0], 100)
    assert ks_two_sample(zeros_ones, zeros_ones + 2).statistic == 1.0
    with pytest.raises(DegenerateSample):
        ks_two_sample(np.ones(100), np.ones(100))
    with pytest.raises(ValueError):
        ks_two_sample(np.ones(10), np.zeros(100))


def test_ks_matches_scipy_unweighted():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(3000), rng.standard_normal(2000) + 0.05
    ours = ks_two_sample(x, y).statistic
    assert ours == pytest.approx(sps.ks_2samp(x, y).statistic, abs=1e-15)


def test_weighted_ks_uses_effective_sizes():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(1000)
    w = rng.uniform(0.5, 1.5, 1000)
    r = ks_two_sample(x, rng.standard_normal(1000), wx=w)
    assert r.extra["effective_sizes"][0] == pytest.approx(effective_size(w))
    assert effective_size(np.ones(7)) == 7


def test_ks_p_values_uniform():
    rng = np.random.default_rng(3)
    p = [ks_two_sample(rng.standard_normal(10_000), rng.standard_normal(10_000)).p_value
         for _ in range(200)]
    assert sps.kstest(p, "uniform").pvalue > 0.01


def test_chi_square_examples():
    prod = np.outer([10, 20, 30], [5, 15]).astype(float)
    assert chi_square_independence(prod).statistic == pytest.approx(0.0, abs=1e-12)
    diag = np.array([[200.0, 0.0], [0.0, 200.0]])
    assert chi_square_independence(diag, merge=False).statistic == pytest.approx(400.0)
    with pytest.raises(SparseCells):
        chi_square_independence(np.array([[1.0, 2.0], [3.0, 1.0]]), merge=False)


def test_chi_square_rejection_rate_near_level():
    rng = np.random.default_rng(4)
    rej = 0
    for _ in range(200):
        x, y = rng.random(2000), rng.random(2000)
        edges = np.linspace(0, 1, 5)
        rej += not chi_square_independence(binned_counts(x, y, edges, edges)).passed
    # binomial(200, 0.01): P(X >= 7) is about 0.5%
    assert rej <= 6


def test_slope_examples():
    x = np.array([1.0, 2, 4, 8, 16, 32])
    s, e = loglog_slope(x, x**-1.5)
    assert s == pytest.approx(-1.5, abs=1e-12) and e == pytest.approx(0.0, abs=1e-12)
    assert loglog_slope(x, 7 * x ** (-4 / 3))[0] == pytest.approx(-4 / 3, abs=1e-12)
    assert loglog_slope(x, np.full(6, 3.0))[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NonPositiveInput):
        loglog_slope(x, -x)


def test_continuity_modulus_examples():
    t = np.linspace(0, 1, 101)
    assert continuity_modulus(3 * t, (0, 1), 0.1) == pytest.approx(0.3)
    assert continuity_modulus(np.full(101, 2.0), (0, 1), 0.1) == 0
    with pytest.raises(ValueError):
        continuity_modulus(t, (0.5, 0.4), 0.1)


def test_report_verdict_and_json(tmp_path):
    r = TestReport("x", 0.5, 0.6)
    assert r.verdict == "pass"
    assert TestReport("x", 0.6, 0.6).verdict == "fail"
    assert TestReport("x", 0.6, 0.6, inclusive=True).verdict == "pass"
    assert TestReport("x", 1.0, p_value=0.001).verdict == "fail"
    d = json.loads(r.to_json())
    # verdict is recomputable from the stored fields
    assert (d["statistic"] < d["critical_value"]) == (d["verdict"] == "pass")
    write_reports([r], tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())[0]["name"] == "x"


def test_jitter_stays_in_cell():
    rng = np.random.default_rng(5)
    k = np.arange(100)
    x = jittered(k, np.full(100, 2.0), rng)
    assert np.all(np.abs(2 * x - k) <= 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["exp", "cube"]))
def test_ks_invariant_under_monotone_maps(seed, which):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(200), rng.standard_normal(150) * 1.2
    f = np.exp if which == "exp" else (lambda v: v**3)
    assert ks_two_sample(f(x), f(y)).statistic == ks_two_sample(x, y).statistic


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 10**6))
def test_slope_invariant_under_rescaling(c, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(1, 100, 8))
    y = rng.uniform(0.1, 10, 8)
    assert loglog_slope(x, c * y)[0] == pytest.approx(loglog_slope(x, y)[0], abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 0.2), st.floats(0.01, 0.2))
def test_continuity_modulus_monotone_in_epsilon(seed, e1, e2):
    f = np.cumsum(np.random.default_rng(seed).standard_normal(257))
    lo, hi = sorted((e1, e2))
    assert continuity_modulus(f, (0, 1), lo) <= continuity_modulus(f, (0, 1), hi)
