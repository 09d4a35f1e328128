"""Inference after a completed run: AIPW point estimate, variance-bound estimate, Wald interval."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import LengthMismatch, RankDeficient
from .numerics import spd_inverse

RANK_RTOL = 1e-10
CSV_FIELDS = ("tau_hat", "e2_1", "e2_0", "vb_hat", "ci_low", "ci_high", "alpha")


@dataclass(frozen=True)
class InferenceResult:
    tau_hat: float
    e2_hat_1: float
    e2_hat_0: float
    vb_hat: float
    ci_low: float
    ci_high: float
    alpha: float

    def csv_row(self) -> list:
        return [self.tau_hat, self.e2_hat_1, self.e2_hat_0, self.vb_hat,
                self.ci_low, self.ci_high, self.alpha]


def normal_quantile(q: float) -> float:
    """Standard normal quantile ``Phi^-1(q)``."""
    return NormalDist().inv_cdf(q)


def _stack(log, covariates):
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != len(log.steps):
        raise LengthMismatch(f"{X.shape[0]} covariates for {len(log.steps)} steps")
    return X


def aipw_estimate(log, covariates) -> float:
    """Adaptive AIPW estimate of the average treatment effect.

    ``mean(pred1 - pred0 + z (y - pred1) / p - (1 - z) (y - pred0) / (1 - p))``
    with the predictions that were in force when each subject was assigned.
    """
    _stack(log, covariates)
    p, z, y = log.p, log.z, log.y_obs
    pred1, pred0 = log.pred1, log.pred0
    terms = pred1 - pred0 + z * (y - pred1) / p - (1 - z) * (y - pred0) / (1 - p)
    return float(np.mean(terms))


def gram_inverse(X) -> np.ndarray:
    """``(X'X)^-1`` after the full-rank check used by the variance-bound estimator."""
    T, d = X.shape
    if T <= d:
        raise RankDeficient(f"need T > d, got T={T}, d={d}")
    G = X.T @ X
    lam = np.linalg.eigvalsh(G / T)[0]
    if lam < RANK_RTOL:
        raise RankDeficient(f"min eigenvalue of X'X/T is {lam:.3e}")
    return spd_inverse(G)


def e2_from_pseudo(X, Ginv, v, w) -> float:
    """``(1/T) [v'Qv - sum_t Q_tt v_t^2 (1 - w_t)]`` with ``Q = I - X (X'X)^-1 X'``."""
    T = X.shape[0]
    Xv = X.T @ v
    qdiag = 1.0 - np.einsum("ij,jk,ik->i", X, Ginv, X)
    quad = v @ v - Xv @ Ginv @ Xv
    return float((quad - np.sum(qdiag * v * v * (1.0 - w))) / T)


def variance_bound_estimate(log, covariates):
    """Unbiased estimates ``(E2_1, E2_0)`` of both arms' squared OLS residual RMS.

    The pairwise IPW form over ``Q = I - X (X'X)^-1 X'`` is computed as a
    quadratic form in the IPW pseudo-outcomes minus a diagonal correction,
    so neither ``Q`` nor any ``T x T`` array is formed.

    Raises
    ------
    RankDeficient
        If ``T <= d`` or the smallest eigenvalue of ``X'X/T`` is below ``1e-10``.
    """
    X = _stack(log, covariates)
    Ginv = gram_inverse(X)
    p, z, y = log.p, log.z, log.y_obs
    v1 = np.where(z == 1, y / p, 0.0)
    v0 = np.where(z == 0, y / (1.0 - p), 0.0)
    return e2_from_pseudo(X, Ginv, v1, p), e2_from_pseudo(X, Ginv, v0, 1.0 - p)


def wald_ci(tau_hat: float, e2_1: float, e2_0: float, T: int, alpha: float = 0.05) -> InferenceResult:
    """Wald interval ``tau_hat +- z_{1-alpha/2} sqrt(VB)`` with ``VB = 4 E(1) E(0) / T``.

    Negative variance estimates are clamped at zero before the square root.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    vb = 4.0 * math.sqrt(max(e2_1, 0.0)) * math.sqrt(max(e2_0, 0.0)) / T
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(vb)
    return InferenceResult(float(tau_hat), float(e2_1), float(e2_0), vb,
                           tau_hat - half, tau_hat + half, float(alpha))


def infer(log, covariates, alpha: float = 0.05) -> InferenceResult:
    """Point estimate, variance-bound estimate and interval in one call."""
    tau = aipw_estimate(log, covariates)
    e1, e0 = variance_bound_estimate(log, covariates)
    return wald_ci(tau, e1, e0, len(log.steps), alpha)
