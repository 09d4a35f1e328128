"""Full-information quantities that only an evaluator who sees both outcomes can compute.

These are the least-squares residuals and their correlation, the Neyman
allocation and oracle variance, the deterministic full-information ridge
predictors, leverage scores, and the pathwise split of a run's realized
variance into probability and prediction regret.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateResiduals
from .numerics import solve_spd
from .sequences import ols_residuals

E_FLOOR = 1e-12


@dataclass(frozen=True)
class OracleSummary:
    e1: float
    e0: float
    rho: float
    beta_ols_1: np.ndarray
    beta_ols_0: np.ndarray
    p_star: float
    v_star_T: float
    vb_T: float
    tau: float

    CSV_FIELDS = ("e1", "e0", "rho", "p_star", "v_star_T", "vb_T", "tau")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


@dataclass(frozen=True)
class RegretBreakdown:
    g_sum: float
    r_prob: float
    r_pred: float
    neyman_regret_realized: float
    v_star_T: float
    T: int

    @property
    def reconciliation(self) -> float:
        """``g_sum - r_prob - r_pred - T * v_star_T``, zero up to rounding."""
        return self.g_sum - self.r_prob - self.r_pred - self.T * self.v_star_T

    def csv_row(self) -> dict:
        row = asdict(self)
        row["reconciliation"] = self.reconciliation
        return row


def residual_moments(X, y1, y0):
    """Vectorized ``(E1, E0, rho, beta1, beta0)``.

    ``y1`` and ``y0`` may be vectors of length ``T`` or arrays of shape
    ``(R, T)`` holding ``R`` sequences that share the covariates ``X``.
    """
    y1 = np.asarray(y1, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    single = y1.ndim == 1
    Y1 = np.atleast_2d(y1).T
    Y0 = np.atleast_2d(y0).T
    res, coef = ols_residuals(X, np.hstack([Y1, Y0]))
    R = Y1.shape[1]
    r1, r0 = res[:, :R], res[:, R:]
    e1 = np.sqrt(np.mean(r1 ** 2, axis=0))
    e0 = np.sqrt(np.mean(r0 ** 2, axis=0))
    if min(e1.min(), e0.min()) < E_FLOOR:
        raise DegenerateResiduals(
            f"residual RMS {min(e1.min(), e0.min()):.3e} below {E_FLOOR:g}")
    rho = np.clip(np.mean(r1 * r0, axis=0) / (e1 * e0), -1.0, 1.0)
    b1, b0 = coef[:, :R].T, coef[:, R:].T
    if single:
        return float(e1[0]), float(e0[0]), float(rho[0]), b1[0], b0[0]
    return e1, e0, rho, b1, b0


def summarize(sequence) -> OracleSummary:
    """Neyman allocation and oracle variance of a sequence.

    Raises
    ------
    RankDeficient
        If ``T <= d`` or the covariates are not of full column rank.
    DegenerateResiduals
        If either arm's residual RMS is below ``1e-12``.
    """
    e1, e0, rho, b1, b0 = residual_moments(sequence.X, sequence.y1, sequence.y0)
    return OracleSummary(
        e1=e1, e0=e0, rho=rho, beta_ols_1=b1, beta_ols_0=b0,
        p_star=1.0 / (1.0 + e0 / e1),
        v_star_T=2.0 * (1.0 + rho) * e1 * e0,
        vb_T=4.0 * e1 * e0,
        tau=sequence.tau,
    )


def _log_arrays(log):
    steps = log.steps
    p = np.array([s.p for s in steps])
    pred1 = np.array([s.pred1 for s in steps])
    pred0 = np.array([s.pred0 for s in steps])
    return p, pred1, pred0


def realized_variance_sum(log, sequence) -> float:
    """``sum_t (r1 sqrt((1-p)/p) + r0 sqrt(p/(1-p)))^2`` with realized-predictor residuals."""
    p, pred1, pred0 = _log_arrays(log)
    r1 = sequence.y1 - pred1
    r0 = sequence.y0 - pred0
    g = (r1 * np.sqrt((1.0 - p) / p) + r0 * np.sqrt(p / (1.0 - p))) ** 2
    return float(np.sum(g))


def regret_components(log, sequence, summary: OracleSummary) -> RegretBreakdown:
    """Split the realized variance sum into probability and prediction regret.

    Residuals inside both the probability loss and the prediction loss are
    taken under the predictors the design actually used at each step.
    """
    p, pred1, pred0 = _log_arrays(log)
    r1 = sequence.y1 - pred1
    r0 = sequence.y0 - pred0
    ps = summary.p_star
    f_real = r1 ** 2 / p + r0 ** 2 / (1.0 - p)
    f_star = r1 ** 2 / ps + r0 ** 2 / (1.0 - ps)
    k = summary.e0 / summary.e1
    loss = (r1 * math.sqrt(k) + r0 / math.sqrt(k)) ** 2
    T = sequence.T
    g_sum = realized_variance_sum(log, sequence)
    r_prob = float(np.sum(f_real) - np.sum(f_star))
    r_pred = float(np.sum(loss) - T * summary.v_star_T)
    return RegretBreakdown(g_sum, r_prob, r_pred, g_sum / T - summary.v_star_T,
                           summary.v_star_T, T)


def eta_schedule(X) -> np.ndarray:
    """Step sizes ``eta_t = T^-1/2 R_t^-2`` with ``R_0 = 1`` for fixed covariates."""
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    radius = np.maximum.accumulate(np.maximum(np.linalg.norm(X, axis=1), 1.0))
    return 1.0 / (math.sqrt(T) * radius ** 2)


def ridge_operators(X):
    """Yield ``(t, M_t)`` with ``M_t = X_{t-1}'X_{t-1} + eta_t^-1 I`` for ``t = 1..T``."""
    X = np.asarray(X, dtype=float)
    T, d = X.shape
    eta = eta_schedule(X)
    gram = np.zeros((d, d))
    for i in range(T):
        yield i + 1, gram + np.eye(d) / eta[i]
        gram = gram + np.outer(X[i], X[i])


def full_info_predictors(sequence, arm: int) -> np.ndarray:
    """Ridge predictors fit on the true outcomes of one arm, shape ``(T, d)``.

    Row ``t-1`` holds ``beta*_t(k)`` fit on subjects ``s < t`` with the
    design's penalty ``eta_t^-1``.
    """
    X = sequence.X
    y = sequence.y1 if arm == 1 else sequence.y0
    out = np.zeros((sequence.T, sequence.d))
    cross = np.zeros(sequence.d)
    for t, M in ridge_operators(X):
        out[t - 1] = solve_spd(M, cross)
        cross = cross + X[t - 1] * y[t - 1]
    return out


def leverage(sequence, t: int, s: int) -> float:
    """``Pi_{t,s} = x_t' (X_{t-1}'X_{t-1} + eta_t^-1 I)^-1 x_s`` (1-based, ``s <= t``)."""
    if not 1 <= s <= t <= sequence.T:
        raise ValueError("need 1 <= s <= t <= T")
    X = sequence.X
    eta = eta_schedule(X)
    G = X[: t - 1].T @ X[: t - 1]
    M = G + np.eye(sequence.d) / eta[t - 1]
    return float(X[t - 1] @ solve_spd(M, X[s - 1]))


def leverage_matrix(sequence) -> np.ndarray:
    """All ``Pi_{t,s}`` for ``s <= t`` as a lower-triangular ``(T, T)`` array."""
    X = sequence.X
    T = sequence.T
    out = np.zeros((T, T))
    for t, M in ridge_operators(X):
        w = solve_spd(M, X[t - 1])
        out[t - 1, :t] = X[:t] @ w
    return out


def expected_estores(sequence, inv_p_means, arm: int) -> np.ndarray:
    """Closed-form expectation of the online residual sum after each step.

    ``E[A_t(k)] = A*_t(k) + sum_{s<=t} sum_{r<s} Pi_{s,r}^2 y_r(k)^2 (E[1/w_r] - 1)``
    where ``A*_t(k)`` uses the full-information predictors and ``w_r`` is the
    arm's assignment probability. Returns an array of length ``T`` indexed by ``t-1``.
    """
    y = sequence.y1 if arm == 1 else sequence.y0
    inv = np.asarray(inv_p_means, dtype=float)
    beta = full_info_predictors(sequence, arm)
    base = (y - np.einsum("ij,ij->i", sequence.X, beta)) ** 2
    Pi = np.tril(leverage_matrix(sequence), -1)
    corr = (Pi ** 2) @ (y ** 2 * (inv - 1.0))
    return np.cumsum(base + corr)
