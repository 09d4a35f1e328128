import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neyman_lab.design import DesignConfig, RunLog, StepRecord, run
from neyman_lab.engine import simulate
from neyman_lab.errors import LengthMismatch, RankDeficient
from neyman_lab.estimator import (CSV_FIELDS, aipw_estimate, infer, normal_quantile,
                                  variance_bound_estimate, wald_ci)
from neyman_lab.identities import variance_bound_literal
from neyman_lab.numerics import RngStream
from neyman_lab.oracle import summarize
from neyman_lab.sequences import gen_lower_bound_main, gen_stationary


def one_step(z, y, p=0.5):
    log = RunLog(DesignConfig(1, 1))
    log.steps.append(StepRecord(1, p, z, y, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0))
    return log


def test_aipw_examples():
    assert aipw_estimate(one_step(1, 3.0), [[1.0]]) == 6.0
    assert aipw_estimate(one_step(0, 1.0), [[1.0]]) == -2.0
    assert 0.5 * (6.0 + -2.0) == 3.0 - 1.0
    with pytest.raises(LengthMismatch):
        aipw_estimate(one_step(1, 3.0), [[1.0], [1.0]])


def test_aipw_perfect_predictions():
    seq = gen_stationary(30, 2, rng=0)
    log = run(DesignConfig(30, 2), seq, 1)
    log.steps = [dataclasses.replace(s, pred1=float(a), pred0=float(b))
                 for s, a, b in zip(log.steps, seq.y1, seq.y0)]
    assert aipw_estimate(log, seq.X) == pytest.approx(seq.tau, rel=1e-12)


def test_variance_bound_zero_outcomes():
    seq = gen_stationary(20, 2, rng=0)
    log = run(DesignConfig(20, 2), seq, 1)
    log.steps = [dataclasses.replace(s, y_obs=0.0) for s in log.steps]
    assert variance_bound_estimate(log, seq.X) == (0.0, 0.0)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31), st.integers(5, 200), st.integers(1, 4))
def test_variance_fast_matches_literal(seed, T, d):
    if T <= d:
        return
    seq = gen_stationary(T, d, rho_target=0.3, rng=seed)
    log = run(DesignConfig(T, d), seq, RngStream(seed, 1))
    fast = variance_bound_estimate(log, seq.X)
    slow = variance_bound_literal(log, seq.X)
    for f, s in zip(fast, slow):
        assert f == pytest.approx(s, rel=1e-10, abs=1e-12 * max(1.0, abs(s)))


def test_variance_bound_rank_errors():
    seq = gen_stationary(3, 2, rng=0)
    log = run(DesignConfig(3, 2), seq, 0)
    with pytest.raises(RankDeficient):
        variance_bound_estimate(log, np.column_stack([seq.X, seq.X[:, :1]]))
    X = seq.X.copy()
    X[:, 1] = 0.0
    with pytest.raises(RankDeficient):
        variance_bound_estimate(log, X)
    with pytest.raises(LengthMismatch):
        variance_bound_estimate(log, seq.X[:2])


def test_wald_examples():
    r = wald_ci(1.5, 0.0, 0.0, 10, 0.05)
    assert r.ci_low == r.ci_high == 1.5 and r.vb_hat == 0.0
    assert round(normal_quantile(0.975), 5) == 1.95996
    r = wald_ci(0.0, 1.0, 1.0, 4, 0.05)
    assert r.ci_high == pytest.approx(normal_quantile(0.975), rel=1e-15)
    assert r.csv_row() == [0.0, 1.0, 1.0, 1.0, r.ci_low, r.ci_high, 0.05]
    assert CSV_FIELDS == ("tau_hat", "e2_1", "e2_0", "vb_hat", "ci_low", "ci_high", "alpha")
    with pytest.raises(ValueError):
        wald_ci(0.0, 1.0, 1.0, 4, 1.0)


@given(st.floats(-1e3, 1e3), st.floats(-5, 50), st.floats(-5, 50), st.integers(1, 10 ** 6),
       st.floats(1e-4, 0.9999))
def test_wald_invariants(tau, e1, e0, T, alpha):
    r = wald_ci(tau, e1, e0, T, alpha)
    assert r.ci_low <= r.tau_hat <= r.ci_high
    assert r.vb_hat == 4 * math.sqrt(max(e1, 0)) * math.sqrt(max(e0, 0)) / T
    assert r.e2_hat_1 == e1 and r.e2_hat_0 == e0


def test_normal_quantile_mpmath():
    mpmath.mp.dps = 40
    qs = np.concatenate([np.linspace(1e-6, 1 - 1e-6, 990), [1e-12, 1e-9, 1e-3, 0.5, 0.975,
                                                               1 - 1e-3, 1 - 1e-9, 0.3, 0.7, 0.9]])
    for q in qs:
        ref = mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(float(q)) - 1)
        assert normal_quantile(float(q)) == pytest.approx(float(ref), abs=1e-9, rel=1e-9)


def test_infer_consistent():
    seq = gen_stationary(60, 2, rng=4)
    log = run(DesignConfig(60, 2), seq, 5)
    r = infer(log, seq.X, alpha=0.1)
    e1, e0 = variance_bound_estimate(log, seq.X)
    assert r == wald_ci(aipw_estimate(log, seq.X), e1, e0, 60, 0.1)


def test_aipw_unbiased_lower_bound_sequence():
    seq = gen_lower_bound_main(50, rng=1)
    res = simulate("ftrl", seq, 20_000, base_seed=2, chunk_size=5000)
    se = res.tau_hat.std(ddof=1) / math.sqrt(res.reps)
    assert abs(res.tau_hat.mean() - seq.tau) <= 3 * se


def test_e2_unbiased_and_clamp_rarity():
    seq = gen_stationary(500, 2, rng=7)
    s = summarize(seq)
    res = simulate("ftrl", seq, 2000, base_seed=8)
    for est, target in ((res.e2_1, s.e1 ** 2), (res.e2_0, s.e0 ** 2)):
        se = est.std(ddof=1) / math.sqrt(est.size)
        assert abs(est.mean() - target) <= 3 * se
        assert np.mean(est < 0) < 0.01
