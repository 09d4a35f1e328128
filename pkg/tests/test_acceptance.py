"""The thirteen acceptance criteria at their stated sizes and tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are
collected again in the terminal summary.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from neyman_lab.design import DesignConfig, run
from neyman_lab.engine import Ensemble, mean_se, simulate
from neyman_lab.harness import build_config, run_command
from neyman_lab.identities import (decomposition_deviation, successive_difference_deviations,
                                   variance_fast_deviation)
from neyman_lab.numerics import RngStream
from neyman_lab.oracle import expected_estores, summarize
from neyman_lab.sequences import (gen_lower_bound_degenerate_covariates, gen_lower_bound_main,
                                  gen_lower_bound_unbounded, gen_stationary)
from neyman_lab.sigmoid import ALGEBRAIC, ARCTAN, bregman_psi, default_grid, verify_condition

T_GRID = (256, 1024, 4096, 16384)


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def corpus(n_runs, t_max=200, seed=0):
    """Sequences from every generator, cycled, with horizons up to ``t_max``."""
    out = []
    for j in range(n_runs):
        g = RngStream(seed, 500 + j).generator
        T = int(g.integers(20, t_max // 2 + 1)) * 2
        kind = j % 4
        if kind == 0:
            seq = gen_stationary(T, int(g.integers(1, 5)), rho_target=float(g.uniform(-0.9, 0.9)),
                                 sd_ratio=float(g.uniform(0.5, 3)), rng=g)
        elif kind == 1:
            seq = gen_lower_bound_main(T, rng=g)
        elif kind == 2:
            seq = gen_lower_bound_unbounded(T, rng=g)
        else:
            seq = gen_lower_bound_degenerate_covariates(T, rng=g)
        out.append((seq, run(DesignConfig(seq.T, seq.d), seq, RngStream(seed, j))))
    return out


@pytest.fixture(scope="module")
def run_corpus():
    return corpus(100)


def test_criterion_01_sigmoid_conditions():
    t0 = time.perf_counter()
    grid = default_grid(10_001, 50.0)
    reports = [verify_condition(s, grid) for s in (ARCTAN, ALGEBRAIC)]
    dt = time.perf_counter() - t0
    worst = max(r.max_violation for r in reports)
    ok = all(r.passed for r in reports) and worst <= 1e-9 and dt < 1.0
    report(1, ok, f"max violation {worst:.2e}, {dt:.3f}s")


def test_criterion_02_bregman_bound():
    t0 = time.perf_counter()
    gen = RngStream(2).generator
    scale = 10.0 ** gen.uniform(-3, 3, size=(2, 100_000))
    v, u = gen.standard_normal((2, 100_000)) * scale
    margin = bregman_psi(v, u) - 0.5 * (v - u) ** 2 * (1 + 0.5 * np.abs(v) + np.abs(u))
    dt = time.perf_counter() - t0
    ok = margin.min() >= -1e-12 and dt < 1.0
    report(2, ok, f"min margin {margin.min():.3e}, {dt:.3f}s")


def test_criterion_03_unbiasedness():
    seq = gen_stationary(200, 2, rng=RngStream(3, 2 ** 63))
    res = simulate("ftrl", seq, 20_000, base_seed=3, chunk_size=5000)
    m, se = mean_se(res.tau_hat)
    gap = abs(m - seq.tau)
    report(3, gap <= 3 * se, f"|mean - tau| = {gap:.4g}, 3 SE = {3 * se:.4g}")


def test_criterion_04_decomposition(run_corpus):
    dev = max(decomposition_deviation(log, seq) for seq, log in run_corpus)
    report(4, dev <= 1e-8, f"max relative deviation {dev:.2e} over {len(run_corpus)} runs")


def test_criterion_05_ftrl_identity(run_corpus):
    runs = run_corpus[:20]
    dev = max(float(successive_difference_deviations(log, seq).max()) for seq, log in runs)
    report(5, dev <= 1e-8, f"max relative deviation {dev:.2e} over {len(runs)} runs")


def test_criterion_06_probability_bounds(run_corpus):
    c = ARCTAN.b1 * (ARCTAN.b2 / 6) ** 0.25
    total = bad = 0
    for _, log in run_corpus:
        p = log.p
        eta = np.array([s.eta for s in log.steps])
        a1 = np.array([s.ahat1_before for s in log.steps])
        a0 = np.array([s.ahat0_before for s in log.steps])
        bad += int(np.sum((1 / p > 2 + c * (eta * a0) ** 0.25) | (1 / (1 - p) > 2 + c * (eta * a1) ** 0.25)))
        total += p.size
    res = simulate("ftrl", Ensemble("lower_bound_main", (("T", 1024),)), 500, base_seed=6)
    bad += int(res.pbound_violations.sum())
    total += res.reps * res.T
    report(6, bad == 0, f"{total - bad}/{total} probabilities within both bounds")


def test_criterion_07_estimated_residual_expectation():
    seq = gen_stationary(100, 1, rng=RngStream(7, 2 ** 63))
    steps = (10, 50, 100)
    res = simulate("ftrl", seq, 100_000, base_seed=7, trace_at=steps, chunk_size=10_000)
    closed = expected_estores(seq, res.inv_p_sum / res.reps, 1)
    worst = 0.0
    for k, t in enumerate(steps):
        m, se = mean_se(res.ahat1_trace[:, k])
        worst = max(worst, abs(m - closed[t - 1]) / se)
    report(7, worst <= 3.0, f"largest gap {worst:.2f} SE at t in {steps}")


def test_criterion_08_variance_bound_estimator(run_corpus):
    fast = [variance_fast_deviation(log, seq.X) for seq, log in run_corpus[:40:4]]
    seq = gen_stationary(500, 2, rng=RngStream(8, 2 ** 63))
    s = summarize(seq)
    res = simulate("ftrl", seq, 10_000, base_seed=8, chunk_size=5000)
    z = []
    for est, target in ((res.e2_1, s.e1 ** 2), (res.e2_0, s.e0 ** 2)):
        m, se = mean_se(est)
        z.append(abs(m - target) / se)
    ok = max(fast) <= 1e-10 and max(z) <= 3.0
    report(8, ok, f"fast vs literal {max(fast):.2e}; Monte Carlo gaps {z[0]:.2f}, {z[1]:.2f} SE")


def sweep(generator):
    cfg = build_config("sweep_regret", {}, {"generator": generator, "T_list": T_GRID,
                                            "replications": 2000, "base_seed": 1})
    header, rows = run_command(cfg)
    table = [dict(zip(header, r)) for r in rows[:-1]]
    return table, rows[-1][-1]


@pytest.fixture(scope="module")
def stationary_sweep():
    return sweep("stationary")


@pytest.fixture(scope="module")
def lower_bound_sweep():
    return sweep("lower_bound_main")


def test_criterion_09_regret_scaling(stationary_sweep):
    table, slope = stationary_sweep
    means = [r["mean_regret"] for r in table]
    ok = (all(m > 0 for m in means) and all(a > b for a, b in zip(means, means[1:]))
          and -0.8 <= slope <= -0.35)
    report(9, ok, "mean regret " + ", ".join(f"{m:.4g}" for m in means) + f"; slope {slope:.3f}")


def test_criterion_10_lower_bound(lower_bound_sweep):
    table, _ = lower_bound_sweep
    scaled = [r["scaled_regret"] for r in table]
    se = [r["se_scaled_regret"] for r in table]
    floor = all(s - 2 * e > 0 for s, e in zip(scaled, se))
    drift = max(abs(a - b) / (2 * math.hypot(ea, eb))
                for (a, ea), (b, eb) in itertools.combinations(zip(scaled, se), 2))
    ok = floor and drift <= 1.0
    detail = ("regret*sqrt(T) " + ", ".join(f"{s:.2f}+-{e:.2f}" for s, e in zip(scaled, se))
              + f"; positive floor {'holds' if floor else 'fails'}; largest pairwise drift "
              f"{drift:.2f} x 2 SE")
    report(10, ok, detail)


def test_criterion_11_coverage():
    cfg = build_config("coverage", {}, {"T_list": (2000,), "replications": 2000, "base_seed": 11,
                                        "rho": 0.0})
    header, rows = run_command(cfg)
    cov = dict(zip(header, rows[0]))["empirical_coverage"]
    report(11, cov >= 0.93, f"empirical coverage {cov:.4f}")


def test_criterion_12_degenerate_lower_bound():
    res = simulate("ftrl", Ensemble("degenerate_covariates", (("T", 200),)), 2000, base_seed=12)
    m, se = mean_se(res.regret)
    report(12, m >= 0.5, f"mean regret {m:.4f} (se {se:.3f})")


COMMANDS = [
    ["simulate", "--T", "60", "--reps", "40"],
    ["sweep-regret", "--T", "32", "64", "--reps", "40"],
    ["sweep-regret", "--generator", "lower_bound_main", "--T", "32", "64", "--reps", "40"],
    ["coverage", "--T", "80", "--reps", "40"],
    ["verify-sigmoid", "--sigmoid", "algebraic"],
    ["check-sequence", "--T", "100"],
    ["identities", "--T", "30", "--reps", "2"],
]


def test_criterion_13_determinism():
    failures = []
    for args in COMMANDS:
        outs = []
        for workers in ("1", "1", "8", "8"):
            cmd = [sys.executable, "-m", "neyman_lab.cli", *args, "--seed", "13",
                   "--workers", workers, "--set", "chunk_size=9"]
            outs.append(subprocess.run(cmd, capture_output=True, check=True).stdout)
        if len(set(outs)) != 1 or not outs[0]:
            failures.append(args[0])
    report(13, not failures, f"{len(COMMANDS)} commands x workers {{1, 8}} x 2 runs"
           + (f"; differing: {failures}" if failures else "; byte-identical"))
