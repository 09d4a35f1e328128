"""Potential-outcome sequences: generators, CSV I/O and assumption checks.

Covariates are fixed constants in the design-based setting, so every
generator returns a complete table of both potential outcomes together with
the covariate matrix. Randomness enters only through ``rng`` and is fully
determined by its seed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ParseError, RankDeficient, TOdd
from .numerics import as_generator

RANK_RTOL = 1e-10


class PotentialOutcomeSequence:
    """Both potential outcomes and the covariates of ``T`` subjects.

    Parameters
    ----------
    y1, y0 : array_like, shape (T,)
        Potential outcomes under treatment and control.
    X : array_like, shape (T, d)
        Covariates, one row per subject.
    label : str
        Free-form name, carried into reports. Not part of equality.
    """

    def __init__(self, y1, y0, X, label: str = ""):
        y1 = np.array(y1, dtype=float).reshape(-1)
        y0 = np.array(y0, dtype=float).reshape(-1)
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if not (y1.shape == y0.shape and X.shape[0] == y1.shape[0]):
            raise DimensionMismatch(
                f"inconsistent lengths: y1 {y1.shape}, y0 {y0.shape}, X {X.shape}")
        if y1.size == 0 or X.shape[1] == 0:
            raise DimensionMismatch("sequence must have T >= 1 and d >= 1")
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y0)) and np.all(np.isfinite(X))):
            raise ValueError("sequence entries must be finite")
        self.y1, self.y0, self.X, self.label = y1, y0, X, label

    @property
    def T(self) -> int:
        return self.y1.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def tau(self) -> float:
        """Average treatment effect ``mean(y1 - y0)``."""
        return float(np.mean(self.y1 - self.y0))

    def __eq__(self, other):
        if not isinstance(other, PotentialOutcomeSequence):
            return NotImplemented
        return (np.array_equal(self.y1, other.y1) and np.array_equal(self.y0, other.y0)
                and np.array_equal(self.X, other.X))

    def __repr__(self):
        return f"PotentialOutcomeSequence(T={self.T}, d={self.d}, label={self.label!r})"


# -- generators -----------------------------------------------------------------

def gen_stationary(T: int, d: int, noise_sd: float = 1.0, effect: float = 1.0,
                   rho_target: float = 0.0, rng=0, sd_ratio: float = 1.0,
                   r_cap: float = 1.0) -> PotentialOutcomeSequence:
    """A stationary linear-model sequence with controlled residual correlation.

    The first covariate is an intercept; the remaining ``d - 1`` are drawn
    uniformly from the ball of radius ``r_cap``. Outcomes follow
    ``y_t(k) = <x_t, beta(k)> + e_t(k)`` where the two noise terms share a
    common Gaussian component so that their correlation is ``rho_target``.

    Parameters
    ----------
    noise_sd : float
        Noise standard deviation of the control arm.
    effect : float
        Intercept shift between the arms (the population treatment effect).
    rho_target : float
        Correlation of the two noise terms, in [-1, 1].
    sd_ratio : float
        Treated-arm noise standard deviation relative to ``noise_sd``.
    """
    if T <= d:
        raise ValueError("gen_stationary requires T > d")
    if not -1.0 <= rho_target <= 1.0:
        raise ValueError("rho_target must lie in [-1, 1]")
    gen = as_generator(rng)
    X = np.ones((T, d))
    if d > 1:
        direction = gen.standard_normal((T, d - 1))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = r_cap * gen.random(T) ** (1.0 / (d - 1))
        X[:, 1:] = direction * radius[:, None]
    beta0 = np.concatenate([[1.0], gen.standard_normal(d - 1)])
    beta1 = beta0 + gen.standard_normal(d) * 0.5
    beta1[0] = beta0[0] + effect

    shared = gen.standard_normal(T)
    own1 = gen.standard_normal(T)
    own0 = gen.standard_normal(T)
    a = math.sqrt(abs(rho_target))
    b = math.sqrt(1.0 - abs(rho_target))
    sign = 1.0 if rho_target >= 0 else -1.0
    e1 = noise_sd * sd_ratio * (a * shared + b * own1)
    e0 = noise_sd * (sign * a * shared + b * own0)
    return PotentialOutcomeSequence(X @ beta1 + e1, X @ beta0 + e0, X,
                                    label=f"stationary(T={T},d={d},rho={rho_target:g})")


def _lower_bound(T: int, rng, spike: float, label: str) -> PotentialOutcomeSequence:
    if T < 2:
        raise ValueError("lower-bound sequences require T >= 2")
    gen = as_generator(rng)
    D = (2.0, 4.0) if gen.random() < 0.5 else (-4.0, -2.0)
    eps = 2.0 * gen.integers(0, 2, size=T) - 1.0
    base = 1.0 + eps
    base[0] = spike + eps[0]
    return PotentialOutcomeSequence(D[0] * base, D[1] * base, np.ones((T, 1)), label=label)


def gen_lower_bound_main(T: int, rng=0) -> PotentialOutcomeSequence:
    """Randomized hard instance with a single ``T^(1/4)`` spike at ``t = 1``.

    ``x_t = 1``; a random sign pair ``D`` in ``{(2, 4), (-4, -2)}`` and one
    shared Rademacher ``eps_t`` per subject give
    ``y_t(k) = D_k (1 + eps_t)`` for ``t >= 2`` and ``D_k (T^(1/4) + eps_1)``
    at ``t = 1``.
    """
    return _lower_bound(T, rng, T ** 0.25, f"lower_bound_main(T={T})")


def gen_lower_bound_unbounded(T: int, rng=0) -> PotentialOutcomeSequence:
    """As :func:`gen_lower_bound_main` with a ``T^(1/2)`` spike.

    The fourth moment of this sequence grows with ``T``.
    """
    return _lower_bound(T, rng, T ** 0.5, f"lower_bound_unbounded(T={T})")


def gen_lower_bound_degenerate_covariates(T: int, rng=0) -> PotentialOutcomeSequence:
    """``d = T/2`` standard-basis covariates followed by ``T/2`` zero vectors.

    Both potential outcomes are equal and uniform on ``{-1, +1}``, so the
    design's ridge predictions are identically zero.
    """
    if T % 2:
        raise TOdd(f"T must be even, got {T}")
    gen = as_generator(rng)
    d = T // 2
    X = np.zeros((T, d))
    X[np.arange(d), np.arange(d)] = 1.0
    y = 2.0 * gen.integers(0, 2, size=T) - 1.0
    return PotentialOutcomeSequence(y, y.copy(), X, label=f"degenerate_covariates(T={T})")


GENERATORS = {
    "stationary": gen_stationary,
    "lower_bound_main": gen_lower_bound_main,
    "lower_bound_unbounded": gen_lower_bound_unbounded,
    "degenerate_covariates": gen_lower_bound_degenerate_covariates,
}


# -- assumption checks ----------------------------------------------------------

def ols_residuals(X, Y):
    """Least-squares residuals of every column of ``Y`` on ``X``.

    Raises ``RankDeficient`` when the smallest eigenvalue of ``X'X/T`` is
    below ``1e-10`` or when ``T <= d``.
    """
    X = np.asarray(X, dtype=float)
    T, d = X.shape
    if T <= d:
        raise RankDeficient(f"need T > d for least squares, got T={T}, d={d}")
    lam = np.linalg.eigvalsh(X.T @ X / T)[0]
    if lam < RANK_RTOL:
        raise RankDeficient(f"min eigenvalue of X'X/T is {lam:.3e}")
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return np.asarray(Y) - X @ coef, coef


@dataclass
class AssumptionReport:
    c0_hat: float
    c1_hat: float
    sigma_min_profile: list
    r_max: float
    r_over_T14: float
    rho: float
    gamma0: float
    c2: float
    well_invertible: bool
    ols_error: str | None = None
    notes: list = field(default_factory=list)

    def table(self) -> str:
        prof = self.sigma_min_profile
        smin = min((s for _, s in prof), default=float("nan"))
        rows = [
            ("c0_hat", f"{self.c0_hat:.6g}"),
            ("c1_hat", f"{self.c1_hat:.6g}"),
            ("sigma_min (t >= sqrt T)", f"{smin:.6g}"),
            ("r_max", f"{self.r_max:.6g}"),
            ("r_max / T^(1/4)", f"{self.r_over_T14:.6g}"),
            ("rho", f"{self.rho:.6g}"),
            (f"well-invertible (gamma0={self.gamma0:g}, c2={self.c2:g})",
             "pass" if self.well_invertible else "FAIL"),
        ]
        if self.ols_error:
            rows.append(("least squares", self.ols_error))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def sigma_min_profile(X, t_start: int = 1):
    """``(t, sigma_min(X_t'X_t / t))`` for ``t = t_start..T``."""
    X = np.asarray(X, dtype=float)
    T, d = X.shape
    outer = X[:, :, None] * X[:, None, :]
    cum = np.cumsum(outer, axis=0)
    ts = np.arange(max(t_start, 1), T + 1)
    mats = cum[ts - 1] / ts[:, None, None]
    lam = np.linalg.eigvalsh(mats)[:, 0]
    return [(int(t), float(max(v, 0.0))) for t, v in zip(ts, lam)]


def check_assumptions(seq: PotentialOutcomeSequence, gamma0: float = 1.0,
                      c2: float = 10.0) -> AssumptionReport:
    """Measure the moment, invertibility, radius and correlation statistics.

    Only the well-invertibility condition has a finite-``t`` criterion and
    gets a verdict: ``sigma_min >= 1/c2`` for every ``t >= gamma0 * sqrt(T)``.
    The other fields are raw statistics. If least squares is impossible the
    OLS-dependent fields (``c0_hat``, ``rho``) are NaN and ``ols_error`` says why.
    """
    T = seq.T
    Y = np.column_stack([seq.y1, seq.y0])
    c1_hat = float(np.max(np.mean(Y ** 4, axis=0) ** 0.25))
    profile = sigma_min_profile(seq.X, math.ceil(math.sqrt(T)))
    t_min = gamma0 * math.sqrt(T)
    well = all(s >= 1.0 / c2 for t, s in profile if t >= t_min)
    r_max = max(1.0, float(np.max(np.linalg.norm(seq.X, axis=1))))
    c0_hat = rho = float("nan")
    err = None
    try:
        res, _ = ols_residuals(seq.X, Y)
        e = np.sqrt(np.mean(res ** 2, axis=0))
        c0_hat = float(e.min())
        rho = float(np.mean(res[:, 0] * res[:, 1]) / (e[0] * e[1])) if e.min() > 0 else float("nan")
    except RankDeficient as exc:
        err = str(exc)
    return AssumptionReport(c0_hat, c1_hat, profile, r_max, r_max / T ** 0.25, rho,
                            gamma0, c2, well, err)


# -- CSV ------------------------------------------------------------------------

def save_csv(seq: PotentialOutcomeSequence, path=None) -> str | None:
    """Write ``t,y1,y0,x1..xd`` rows. Returns the text when ``path`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "y1", "y0"] + [f"x{j + 1}" for j in range(seq.d)])
    for i in range(seq.T):
        w.writerow([i + 1, repr(float(seq.y1[i])), repr(float(seq.y0[i]))]
                   + [repr(float(v)) for v in seq.X[i]])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None


def load_csv(source, label: str | None = None) -> PotentialOutcomeSequence:
    """Read a sequence written by :func:`save_csv` (path or text stream)."""
    if hasattr(source, "read"):
        text = source.read()
        name = label or ""
    else:
        with open(source, newline="") as fh:
            text = fh.read()
        name = label if label is not None else str(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    for col in ("t", "y1", "y0"):
        if col not in header:
            raise ParseError("missing column", row=1, column=col)
    xcols = [h for h in header if h.startswith("x")]
    d = len(xcols)
    if d == 0:
        raise ParseError("missing column", row=1, column="x1")
    for j in range(d):
        if f"x{j + 1}" not in header:
            raise ParseError("missing column", row=1, column=f"x{j + 1}")
    order = [header.index(c) for c in ["t", "y1", "y0"] + [f"x{j + 1}" for j in range(d)]]
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DimensionMismatch(f"row {i} has {len(row)} fields, header has {len(header)}")
        vals = []
        for k in order:
            try:
                vals.append(float(row[k]))
            except ValueError:
                raise ParseError(f"not a number: {row[k]!r}", row=i, column=header[k]) from None
        if vals[0] != len(data) + 1:
            raise ParseError(f"expected t={len(data) + 1}", row=i, column="t")
        data.append(vals)
    if not data:
        raise ParseError("no data rows", row=2)
    a = np.array(data)
    return PotentialOutcomeSequence(a[:, 1], a[:, 2], a[:, 3:], label=name)
