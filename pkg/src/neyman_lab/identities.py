"""Exact algebraic identities checked on concrete runs.

Each check returns the largest relative deviation it saw. All of them hold
exactly in real arithmetic, so deviations measure rounding only, unless a
check is deliberately corrupted through its test hook.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignConfig, probability_objective, run, select_probability
from .estimator import variance_bound_estimate
from .numerics import RngStream, solve_spd
from .oracle import eta_schedule, regret_components, summarize
from .sequences import (gen_lower_bound_degenerate_covariates, gen_lower_bound_main,
                        gen_stationary)
from .sigmoid import ALGEBRAIC, ARCTAN, bregman_psi

TINY = 1e-300


@dataclass(frozen=True)
class IdentityResult:
    name: str
    max_rel_deviation: float
    checks: int

    def csv_row(self) -> list:
        return [self.name, self.max_rel_deviation, self.checks]


CSV_HEADER = ("identity", "max_rel_deviation", "checks")


def decomposition_deviation(log, seq) -> float:
    """``|g_sum - r_prob - r_pred - T V*| / g_sum`` for one run."""
    b = regret_components(log, seq, summarize(seq))
    return abs(b.reconciliation) / max(abs(b.g_sum), TINY)


def successive_difference_deviations(log, seq, pi_scale: float = 1.0) -> np.ndarray:
    """Per-step, per-arm deviation of the ridge successive-difference identity.

    For the penalty ``eta_t^-1`` of step ``t``, the regularized cumulative
    loss over ``s <= t`` exceeds its minimum at the previous predictor by
    ``Pi/(1+Pi) r^2`` with ``Pi = x_t' (G_{t-1} + eta_t^-1 I)^-1 x_t`` and
    ``r`` the pseudo-outcome residual. The left side is evaluated as the
    exact quadratic ``(b_t - b~)' (G_t + eta_t^-1 I) (b_t - b~)``.
    ``pi_scale`` multiplies ``Pi`` on the right side (a falsification hook).
    """
    X = seq.X
    T, d = X.shape
    eta = eta_schedule(X)
    p, z, y = log.p, log.z, log.y_obs
    pseudo = np.column_stack([np.where(z == 1, y / p, 0.0), np.where(z == 0, y / (1 - p), 0.0)])
    gram = np.zeros((d, d))
    cross = np.zeros((d, 2))
    out = np.zeros((T, 2))
    I = np.eye(d)
    for i in range(T):
        x = X[i]
        M = gram + I / eta[i]
        beta = solve_spd(M, cross)
        gram_next = gram + np.outer(x, x)
        cross_next = cross + np.outer(x, pseudo[i])
        M_next = gram_next + I / eta[i]
        beta_next = solve_spd(M_next, cross_next)
        diff = beta - beta_next
        lhs = np.einsum("ik,ij,jk->k", diff, M_next, diff)
        Pi = pi_scale * float(x @ solve_spd(M, x))
        resid = pseudo[i] - x @ beta
        rhs = Pi / (1.0 + Pi) * resid ** 2
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), TINY)
        out[i] = np.where((lhs == 0) & (rhs == 0), 0.0, np.abs(lhs - rhs) / scale)
        gram, cross = gram_next, cross_next
    return out


def variance_bound_literal(log, X):
    """The pairwise IPW double sum over ``Q = I - X (X'X)^-1 X'``, ``O(T^2)``."""
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    Q = np.eye(T) - X @ np.linalg.solve(X.T @ X, X.T)
    p, z, y = log.p, log.z, log.y_obs
    out = []
    for k, w in ((1, p), (0, 1 - p)):
        ind = (z == k).astype(float)
        total = 0.0
        for t in range(T):
            total += Q[t, t] * y[t] ** 2 * ind[t] / w[t]
            for s in range(T):
                if s != t:
                    total += Q[t, s] * y[t] * y[s] * ind[t] * ind[s] / (w[t] * w[s])
        out.append(total / T)
    return tuple(out)


def variance_fast_deviation(log, X) -> float:
    fast = variance_bound_estimate(log, X)
    slow = variance_bound_literal(log, X)
    return max(abs(f - s) / max(abs(s), TINY) if (f or s) else 0.0 for f, s in zip(fast, slow))


def probability_grid_deviation(sigmoid, a1, a0, eta, resolution: float = 1e-6) -> float:
    """Relative excess of the objective at the solver's ``p`` over a grid minimum.

    The grid is refined once around its best point, so the comparison is
    not limited by the grid spacing. Negative excess (solver better than
    grid) counts as zero.
    """
    grid = np.arange(resolution, 1.0, resolution)
    obj = probability_objective(sigmoid, a1, a0, eta, grid)
    k = int(np.argmin(obj))
    fine = np.linspace(grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)], 20001)
    best = float(np.min(probability_objective(sigmoid, a1, a0, eta, fine)))
    got = float(probability_objective(sigmoid, a1, a0, eta, select_probability(sigmoid, a1, a0, eta)))
    return max(0.0, (got - best) / abs(best))


def bregman_deviation(n: int = 100_000, seed: int = 0) -> float:
    """Largest relative shortfall of ``B(v|u)`` below ``(v-u)^2 (1 + |v|/2 + |u|) / 2``."""
    gen = RngStream(seed).generator
    scale = 10.0 ** gen.uniform(-3, 3, size=(2, n))
    v, u = gen.standard_normal((2, n)) * scale
    b = bregman_psi(v, u)
    bound = 0.5 * (v - u) ** 2 * (1.0 + 0.5 * np.abs(v) + np.abs(u))
    short = np.maximum(bound - b, 0.0) / np.maximum(bound, TINY)
    return float(short.max())


def default_corpus(T: int = 100, runs: int = 3, seed: int = 0):
    """Sequences spanning every generator that supports least squares at this ``T``."""
    seqs = []
    for j in range(runs):
        g = RngStream(seed, 1000 + j).generator
        seqs.append(gen_stationary(T, min(2, T - 1), rho_target=0.5 * j / max(runs - 1, 1), rng=g))
        seqs.append(gen_lower_bound_main(T, rng=g))
        if T % 2 == 0 and T >= 4:
            seqs.append(gen_lower_bound_degenerate_covariates(T, rng=g))
    return seqs


def run_suite(T: int = 100, runs: int = 3, seed: int = 0, pi_scale: float = 1.0,
              bregman_samples: int = 100_000) -> list[IdentityResult]:
    """Run every identity on a small corpus and report the worst deviation of each."""
    seqs = default_corpus(T, runs, seed)
    logs = [run(DesignConfig(s.T, s.d), s, RngStream(seed, j)) for j, s in enumerate(seqs)]
    dec = [decomposition_deviation(lg, s) for lg, s in zip(logs, seqs)]
    sd = [successive_difference_deviations(lg, s, pi_scale) for lg, s in zip(logs, seqs)]
    var = [variance_fast_deviation(lg, s.X) for lg, s in zip(logs, seqs) if s.T > s.d]

    probes = []
    gen = RngStream(seed, 7).generator
    for sig in (ARCTAN, ALGEBRAIC):
        for _ in range(10):
            probes.append((sig, float(gen.exponential(20)), float(gen.exponential(20)),
                           float(10 ** gen.uniform(-3, 0))))
    grid = [probability_grid_deviation(*pr) for pr in probes]

    return [
        IdentityResult("regret_decomposition", max(dec), len(dec)),
        IdentityResult("successive_difference", float(max(a.max() for a in sd)),
                       int(sum(a.size for a in sd))),
        IdentityResult("variance_fast_vs_literal", float(max(var)) if var else 0.0, len(var)),
        IdentityResult("probability_vs_grid", max(grid), len(grid)),
        IdentityResult("bregman_bound", bregman_deviation(bregman_samples, seed), bregman_samples),
    ]
