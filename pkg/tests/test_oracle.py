import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from neyman_lab.baselines import BaselineKind, run_baseline
from neyman_lab.design import DesignConfig, RunLog, StepRecord, run
from neyman_lab.engine import simulate
from neyman_lab.errors import DegenerateResiduals, RankDeficient
from neyman_lab.numerics import RngStream
from neyman_lab.oracle import (eta_schedule, expected_estores, full_info_predictors, leverage,
                               leverage_matrix, realized_variance_sum, regret_components,
                               residual_moments, summarize)
from neyman_lab.sequences import (PotentialOutcomeSequence, check_assumptions,
                                  gen_lower_bound_degenerate_covariates, gen_lower_bound_main,
                                  gen_stationary)


def make_log(p, z, y, pred1, pred0):
    log = RunLog(DesignConfig(len(p), 1))
    for i in range(len(p)):
        log.steps.append(StepRecord(i + 1, float(p[i]), int(z[i]), float(y[i]), float(pred1[i]),
                                    float(pred0[i]), float("nan"), float("nan"), 0.0, 0.0))
    return log


def test_summary_rho_one():
    seq = gen_stationary(50, 2, rng=0)
    s = summarize(PotentialOutcomeSequence(seq.y1, seq.y1 + seq.X @ [1.0, 2.0], seq.X))
    assert s.rho == pytest.approx(1.0, abs=1e-12)
    assert s.vb_T == pytest.approx(s.v_star_T, rel=1e-12)


def test_summary_rho_minus_one():
    seq = gen_stationary(50, 2, rng=0)
    s = summarize(PotentialOutcomeSequence(seq.y1, -seq.y1, seq.X))
    assert s.rho == pytest.approx(-1.0, abs=1e-12)
    assert s.v_star_T == pytest.approx(0.0, abs=1e-12)


def test_summary_p_star_three_quarters():
    s = summarize(PotentialOutcomeSequence([3, -3, 3, -3], [1, -1, -1, 1], np.ones((4, 1))))
    assert (s.e1, s.e0) == (3.0, 1.0)
    assert s.p_star == 0.75
    assert s.rho == 0.0 and s.v_star_T == 6.0 and s.vb_T == 12.0 and s.tau == 0.0


def test_summary_errors():
    with pytest.raises(RankDeficient):
        summarize(PotentialOutcomeSequence([1, 2], [1, 2], [[1, 0], [0, 1]]))
    X = np.column_stack([np.ones(4), np.arange(4.0)])
    with pytest.raises(DegenerateResiduals):
        summarize(PotentialOutcomeSequence(1 + np.arange(4.0), [1, -1, 1, -1], X))


@settings(max_examples=40)
@given(st.integers(0, 2 ** 31), st.floats(-1, 1), st.floats(0.2, 5))
def test_summary_invariants(seed, rho, ratio):
    s = summarize(gen_stationary(60, 3, rho_target=rho, sd_ratio=ratio, rng=seed))
    assert s.p_star == 1 / (1 + s.e0 / s.e1)
    assert s.v_star_T == pytest.approx(2 * (1 + s.rho) * s.e1 * s.e0, rel=1e-15)
    assert s.vb_T >= s.v_star_T - 1e-12
    assert abs(s.rho) <= 1 + 1e-12


def test_residual_moments_vectorized():
    seqs = [gen_stationary(40, 2, rng=s) for s in range(3)]
    X = seqs[0].X
    y1 = np.stack([seqs[0].y1 + k for k in range(3)])
    y0 = np.stack([seqs[k].y0 for k in range(3)])
    e1, e0, rho, b1, b0 = residual_moments(X, y1, y0)
    for k in range(3):
        ref = residual_moments(X, y1[k], y0[k])
        np.testing.assert_allclose([e1[k], e0[k], rho[k]], ref[:3], rtol=1e-12)
        np.testing.assert_allclose(b1[k], ref[3], rtol=1e-12)


def test_p_star_is_grid_argmin():
    seq = gen_stationary(300, 2, sd_ratio=2.5, rho_target=0.3, rng=1)
    s = summarize(seq)
    r1 = seq.y1 - seq.X @ s.beta_ols_1
    r0 = seq.y0 - seq.X @ s.beta_ols_0
    grid = np.arange(1e-6, 1.0, 1e-6)
    agg = np.sum(r1 ** 2) / grid + np.sum(r0 ** 2) / (1 - grid)
    assert abs(grid[np.argmin(agg)] - s.p_star) <= 1e-6


def test_ols_joint_optimality():
    seq = gen_stationary(200, 3, rho_target=-0.4, sd_ratio=1.7, rng=2)
    s = summarize(seq)
    rng = np.random.default_rng(0)

    def best_g(b1, b0):
        r1 = seq.y1 - seq.X @ b1
        r0 = seq.y0 - seq.X @ b0
        g = lambda p: np.sum((r1 * math.sqrt((1 - p) / p) + r0 * math.sqrt(p / (1 - p))) ** 2)
        return minimize_scalar(g, bounds=(1e-9, 1 - 1e-9), method="bounded",
                               options={"xatol": 1e-12}).fun

    base = best_g(s.beta_ols_1, s.beta_ols_0)
    assert base == pytest.approx(seq.T * s.v_star_T, rel=1e-8)
    for _ in range(1000):
        scale = 10 ** rng.uniform(-4, 0)
        d1, d0 = rng.standard_normal((2, 3)) * scale
        assert best_g(s.beta_ols_1 + d1, s.beta_ols_0 + d0) >= base - 1e-9 * max(1.0, base)


def test_realized_variance_sum_examples():
    y = np.array([1.0, -2.0, 0.5])
    seq = PotentialOutcomeSequence(y, 2 * y, np.ones((3, 1)))
    assert realized_variance_sum(make_log([0.3, 0.5, 0.8], [1, 0, 1], y, y, 2 * y), seq) == 0.0
    seq = PotentialOutcomeSequence([3.0], [1.0], [[1.0]])
    log = make_log([0.5], [1], [3.0], [0.5], [-1.0])
    assert realized_variance_sum(log, seq) == (2.5 + 2.0) ** 2


def test_regret_components_oracle_comparator_zero():
    seq = gen_stationary(80, 2, sd_ratio=2.0, rng=3)
    s = summarize(seq)
    log = run_baseline(BaselineKind.ORACLE_NEYMAN, seq, 0, s)
    b = regret_components(log, seq, s)
    assert b.r_prob == 0.0
    assert abs(b.r_pred) <= 1e-10 * b.g_sum
    assert b.g_sum == pytest.approx(seq.T * s.v_star_T, rel=1e-10)


@settings(max_examples=25)
@given(st.sampled_from(["stationary", "lower", "degenerate"]), st.integers(0, 2 ** 31))
def test_decomposition_identity(family, seed):
    if family == "stationary":
        seq = gen_stationary(60, 2, rho_target=0.5, rng=seed)
    elif family == "lower":
        seq = gen_lower_bound_main(60, rng=seed)
    else:
        seq = gen_lower_bound_degenerate_covariates(8, rng=seed)
        seq = PotentialOutcomeSequence(seq.y1, seq.y0 + np.arange(8.0) % 3, np.ones((8, 1)))
    log = run(DesignConfig(seq.T, seq.d), seq, RngStream(seed))
    b = regret_components(log, seq, summarize(seq))
    assert abs(b.reconciliation) <= 1e-8 * abs(b.g_sum)
    assert b.neyman_regret_realized == pytest.approx(b.g_sum / seq.T - b.v_star_T)


def test_full_info_predictors_examples():
    seq = PotentialOutcomeSequence([2.0, 5.0, 1.0, 7.0], [0.0, 1.0, 2.0, 3.0], np.ones((4, 1)))
    beta = full_info_predictors(seq, 1)
    assert beta[0, 0] == 0.0
    c = 1 / eta_schedule(seq.X)[1]
    assert c == 2.0
    assert beta[1, 0] == pytest.approx(2 / (1 + c))
    assert beta[2, 0] == pytest.approx(7 / (2 + c))
    assert full_info_predictors(seq, 0)[3, 0] == pytest.approx(3 / (3 + c))


def test_eta_schedule():
    X = np.array([[0.5], [2.0], [1.0]])
    np.testing.assert_allclose(eta_schedule(X), [3 ** -0.5, 3 ** -0.5 / 4, 3 ** -0.5 / 4])


def test_leverage_examples():
    seq = PotentialOutcomeSequence(np.zeros(9), np.zeros(9), np.ones((9, 1)))
    assert leverage(seq, 1, 1) == pytest.approx(1 / 3)
    assert leverage(seq, 4, 2) == pytest.approx(1 / (3 + 3))
    with pytest.raises(ValueError):
        leverage(seq, 2, 3)


def test_leverage_matrix_and_bound():
    seq = gen_stationary(400, 3, rng=4)
    P = leverage_matrix(seq)
    for t, s in [(1, 1), (7, 3), (250, 250), (400, 17)]:
        assert P[t - 1, s - 1] == pytest.approx(leverage(seq, t, s), rel=1e-12)
    assert np.all(np.diag(P) >= 0)
    rep = check_assumptions(seq, gamma0=1.0, c2=10.0)
    assert rep.well_invertible
    R = np.maximum.accumulate(np.maximum(np.linalg.norm(seq.X, axis=1), 1.0))
    t = np.arange(1, seq.T + 1)
    denom = np.maximum(t - 1, 1 / eta_schedule(seq.X))
    bound = max(rep.gamma0, rep.c2, 1.0) * R[:, None] * R[None, :] / denom[:, None]
    assert np.all(np.abs(np.tril(P)) <= np.tril(bound) + 1e-12)


def test_expected_estores_unit_weights():
    seq = gen_stationary(30, 2, rng=5)
    beta = full_info_predictors(seq, 0)
    direct = np.cumsum((seq.y0 - np.einsum("ij,ij->i", seq.X, beta)) ** 2)
    np.testing.assert_allclose(expected_estores(seq, np.ones(30), 0), direct, rtol=1e-12)


@pytest.mark.parametrize("p", [0.5, 0.3])
def test_expected_estores_t2_enumeration(p):
    x1, x2, y1, y2 = 0.7, 1.6, 2.0, -1.5
    seq = PotentialOutcomeSequence([y1, y2], [0.0, 0.0], [[x1], [x2]])
    eta2 = 1 / (math.sqrt(2) * 1.6 ** 2)
    # hand expansion: beta_2 = x1 v1 / (x1^2 + 1/eta2), v1 = y1 z1 / p
    total = 0.0
    for z1, prob in ((1, p), (0, 1 - p)):
        beta2 = x1 * (y1 * z1 / p) / (x1 ** 2 + 1 / eta2)
        # E[1[z=1] r^2 / p] = r^2 for a non-adaptive p
        total += prob * (y2 - x2 * beta2) ** 2
    expected = [y1 ** 2, y1 ** 2 + total]
    got = expected_estores(seq, [1 / p, 1 / p], 1)
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_variance_dominance_exact():
    for seed in range(20):
        s = summarize(gen_stationary(50, 2, rho_target=np.tanh(seed - 10), rng=seed))
        assert 4 * s.e1 * s.e0 >= 2 * (1 + s.rho) * s.e1 * s.e0
        if s.rho < 1:
            assert 4 * s.e1 * s.e0 > 2 * (1 + s.rho) * s.e1 * s.e0


def test_monte_carlo_variance_sum_matches_estimator_variance():
    seq = gen_stationary(100, 2, rho_target=0.2, rng=6)
    res = simulate("ftrl", seq, 10_000, base_seed=3, chunk_size=2500)
    T = seq.T
    a = res.g_sum / T
    b = T * (res.tau_hat - seq.tau) ** 2
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) <= 4 * se
    r = res.regret
    assert r.mean() >= -3 * r.std(ddof=1) / math.sqrt(r.size)
