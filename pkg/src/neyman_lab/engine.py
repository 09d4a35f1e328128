"""Vectorized Monte Carlo over many independent replications of one design.

Covariates are fixed, so the step sizes, ridge operators and leverage
scores are shared by every replication and computed once. Per-replication
state (cross-products, online residuals, accumulators) is held in arrays
with one row per replication and updated elementwise, so each row evolves
exactly as a standalone run would, whatever the chunking.

Replication ``j`` draws everything from ``RngStream(base_seed, j)``: first
the sequence itself when the source is a random ensemble, then one uniform
per subject. Chunks are processed in a fixed order and concatenated, so
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import P_FLOOR, select_probability_batch
from .errors import RankDeficient
from .estimator import gram_inverse, normal_quantile
from .numerics import RngStream, solve_spd
from .oracle import eta_schedule, residual_moments
from .sequences import GENERATORS, PotentialOutcomeSequence
from .sigmoid import ARCTAN, SigmoidSpec

DESIGNS = ("ftrl", "bernoulli", "oracle")
DEFAULT_CHUNK = 1000
UNIFORM_BLOCK = 1024


@dataclass(frozen=True)
class Ensemble:
    """A random sequence family: ``GENERATORS[name](rng=..., **params)``.

    Every draw must share the same covariates.
    """

    name: str
    params: tuple = ()

    def draw(self, gen) -> PotentialOutcomeSequence:
        return GENERATORS[self.name](rng=gen, **dict(self.params))


@dataclass
class BatchResult:
    """Per-replication summaries, in replication order."""

    design: str
    T: int
    d: int
    alpha: float
    tau: np.ndarray
    tau_hat: np.ndarray
    g_sum: np.ndarray
    r_prob: np.ndarray
    r_pred: np.ndarray
    v_star_T: np.ndarray
    e2_1: np.ndarray
    e2_0: np.ndarray
    clamp_count: np.ndarray
    pbound_violations: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    inv_p_sum: np.ndarray = field(repr=False)
    inv_q_sum: np.ndarray = field(repr=False)
    ahat1_trace: np.ndarray | None = field(default=None, repr=False)
    ahat0_trace: np.ndarray | None = field(default=None, repr=False)
    beta1_snap: np.ndarray | None = field(default=None, repr=False)
    beta0_snap: np.ndarray | None = field(default=None, repr=False)
    records: dict | None = field(default=None, repr=False)

    @property
    def reps(self) -> int:
        return self.tau_hat.shape[0]

    @property
    def regret(self) -> np.ndarray:
        """Realized Neyman regret ``g_sum / T - T V*`` of each replication."""
        return self.g_sum / self.T - self.v_star_T

    @property
    def vb_hat(self) -> np.ndarray:
        return 4.0 * np.sqrt(np.maximum(self.e2_1, 0.0)) * np.sqrt(np.maximum(self.e2_0, 0.0)) / self.T

    @property
    def ci(self):
        half = normal_quantile(1.0 - self.alpha / 2.0) * np.sqrt(self.vb_hat)
        return self.tau_hat - half, self.tau_hat + half

    @property
    def covered(self) -> np.ndarray:
        lo, hi = self.ci
        return (lo <= self.tau) & (self.tau <= hi)


@dataclass(frozen=True)
class _Job:
    design: str
    source: object
    base_seed: int
    start: int
    stop: int
    sigmoid: SigmoidSpec
    p_floor: float
    alpha: float
    trace_at: tuple
    beta_at: tuple
    record: bool


def _draw_chunk(job: _Job):
    """Sequences and uniform draws for replications ``start..stop-1``."""
    gens = [RngStream(job.base_seed, j).generator for j in range(job.start, job.stop)]
    if isinstance(job.source, PotentialOutcomeSequence):
        seq = job.source
        X, y1, y0 = seq.X, seq.y1[None, :], seq.y0[None, :]
    else:
        seqs = [job.source.draw(g) for g in gens]
        X = seqs[0].X
        for s in seqs[1:]:
            if not np.array_equal(s.X, X):
                raise ValueError(f"ensemble {job.source.name!r} does not have fixed covariates")
        y1 = np.stack([s.y1 for s in seqs])
        y0 = np.stack([s.y0 for s in seqs])
    return gens, X, y1, y0


def _run_chunk(job: _Job) -> dict:
    gens, X, y1, y0 = _draw_chunk(job)
    T, d = X.shape
    R = len(gens)
    shared_y = y1.shape[0] == 1

    e1, e0, rho, b1, b0 = residual_moments(X, y1 if not shared_y else y1[0],
                                           y0 if not shared_y else y0[0])
    e1, e0, rho = (np.broadcast_to(np.asarray(v, dtype=float), (R,)) for v in (e1, e0, rho))
    p_star = 1.0 / (1.0 + e0 / e1)
    v_star_T = 2.0 * (1.0 + rho) * e1 * e0
    b1 = np.broadcast_to(np.atleast_2d(b1), (R, d))
    b0 = np.broadcast_to(np.atleast_2d(b0), (R, d))

    try:
        Ginv = gram_inverse(X)
        qdiag = 1.0 - np.einsum("ij,jk,ik->i", X, Ginv, X)
    except RankDeficient:
        Ginv, qdiag = None, np.zeros(T)

    eta = eta_schedule(X)
    sig = job.sigmoid
    pb_const = sig.b1 * (sig.b2 / 6.0) ** 0.25

    cross1 = np.zeros((R, d))
    cross0 = np.zeros((R, d))
    ahat1 = np.zeros(R)
    ahat0 = np.zeros(R)
    u_prev = np.zeros(R)
    gram = np.zeros((d, d))

    acc = {k: np.zeros(R) for k in ("tau", "g", "f", "s11", "s00", "s10", "vv1", "vv0",
                                    "dg1", "dg0", "clamp", "viol")}
    Xv1 = np.zeros((R, d))
    Xv0 = np.zeros((R, d))
    p_min = np.ones(R)
    p_max = np.zeros(R)
    inv_p_sum = np.zeros(T)
    inv_q_sum = np.zeros(T)
    trace_at = sorted(set(job.trace_at))
    beta_at = sorted(set(job.beta_at))
    tr1 = np.zeros((R, len(trace_at)))
    tr0 = np.zeros((R, len(trace_at)))
    bs1 = np.zeros((R, len(beta_at), d))
    bs0 = np.zeros((R, len(beta_at), d))
    rec = {k: np.zeros((R, T)) for k in ("p", "z", "pred1", "pred0")} if job.record else None

    U = np.zeros((R, 0))
    for i in range(T):
        if i % UNIFORM_BLOCK == 0:
            n = min(UNIFORM_BLOCK, T - i)
            U = np.stack([g.random(n) for g in gens])
        u_draw = U[:, i % UNIFORM_BLOCK]
        x = X[i]
        t = i + 1

        if job.design == "ftrl":
            M = gram + np.eye(d) / eta[i]
            w = solve_spd(M, x)
            pred1 = np.zeros(R)
            pred0 = np.zeros(R)
            for j in range(d):
                pred1 += cross1[:, j] * w[j]
                pred0 += cross0[:, j] * w[j]
            if t in beta_at:
                Minv_cross = solve_spd(M, np.vstack([cross1, cross0]).T).T
                k = beta_at.index(t)
                bs1[:, k], bs0[:, k] = Minv_cross[:R], Minv_cross[R:]
            p, clamped, u_prev = select_probability_batch(sig, ahat1, ahat0, eta[i], job.p_floor,
                                                          u0=u_prev, return_u=True)
            acc["clamp"] += clamped
            lim1 = 2.0 + pb_const * (eta[i] * ahat0) ** 0.25
            lim0 = 2.0 + pb_const * (eta[i] * ahat1) ** 0.25
            acc["viol"] += (1.0 / p > lim1 * (1 + 1e-12)) | (1.0 / (1.0 - p) > lim0 * (1 + 1e-12))
        elif job.design == "bernoulli":
            p = np.full(R, 0.5)
            pred1 = np.zeros(R)
            pred0 = np.zeros(R)
        else:
            p = p_star.copy()
            pred1 = b1 @ x
            pred0 = b0 @ x

        z = u_draw < p
        yt1 = y1[:, i] if not shared_y else np.full(R, y1[0, i])
        yt0 = y0[:, i] if not shared_y else np.full(R, y0[0, i])
        y = np.where(z, yt1, yt0)
        q = 1.0 - p
        v1 = np.where(z, y / p, 0.0)
        v0 = np.where(z, 0.0, y / q)

        if job.design == "ftrl":
            for j in range(d):
                cross1[:, j] += x[j] * v1
                cross0[:, j] += x[j] * v0
            ahat1 += np.where(z, (y - pred1) ** 2 / p, 0.0)
            ahat0 += np.where(z, 0.0, (y - pred0) ** 2 / q)
            gram = gram + np.outer(x, x)
        if t in trace_at:
            k = trace_at.index(t)
            tr1[:, k], tr0[:, k] = ahat1, ahat0

        acc["tau"] += pred1 - pred0 + v1 - np.where(z, pred1 / p, 0.0) \
            - v0 + np.where(z, 0.0, pred0 / q)
        r1 = yt1 - pred1
        r0 = yt0 - pred0
        acc["g"] += (r1 * np.sqrt(q / p) + r0 * np.sqrt(p / q)) ** 2
        acc["f"] += r1 * r1 / p + r0 * r0 / q
        acc["s11"] += r1 * r1
        acc["s00"] += r0 * r0
        acc["s10"] += r1 * r0
        acc["vv1"] += v1 * v1
        acc["vv0"] += v0 * v0
        acc["dg1"] += qdiag[i] * v1 * v1 * q
        acc["dg0"] += qdiag[i] * v0 * v0 * p
        for j in range(d):
            Xv1[:, j] += x[j] * v1
            Xv0[:, j] += x[j] * v0
        np.minimum(p_min, p, out=p_min)
        np.maximum(p_max, p, out=p_max)
        inv_p_sum[i] = np.sum(1.0 / p)
        inv_q_sum[i] = np.sum(1.0 / q)
        if rec is not None:
            rec["p"][:, i], rec["z"][:, i] = p, z
            rec["pred1"][:, i], rec["pred0"][:, i] = pred1, pred0

    if Ginv is not None:
        e2_1 = (acc["vv1"] - np.einsum("ri,ij,rj->r", Xv1, Ginv, Xv1) - acc["dg1"]) / T
        e2_0 = (acc["vv0"] - np.einsum("ri,ij,rj->r", Xv0, Ginv, Xv0) - acc["dg0"]) / T
    else:
        e2_1 = e2_0 = np.full(R, np.nan)

    f_star = acc["s11"] / p_star + acc["s00"] / (1.0 - p_star)
    k = e0 / e1
    loss_sum = k * acc["s11"] + acc["s00"] / k + 2.0 * acc["s10"]
    tau = np.mean(y1 - y0, axis=1)
    return dict(
        tau=np.broadcast_to(tau, (R,)).copy(),
        tau_hat=acc["tau"] / T,
        g_sum=acc["g"],
        r_prob=acc["f"] - f_star,
        r_pred=loss_sum - T * v_star_T,
        v_star_T=np.array(v_star_T, dtype=float),
        e2_1=e2_1, e2_0=e2_0,
        clamp_count=acc["clamp"].astype(np.int64),
        pbound_violations=acc["viol"].astype(np.int64),
        p_min=p_min, p_max=p_max,
        inv_p_sum=inv_p_sum, inv_q_sum=inv_q_sum,
        ahat1_trace=tr1, ahat0_trace=tr0,
        beta1_snap=bs1, beta0_snap=bs0,
        records=rec, T=T, d=d,
    )


def simulate(design: str, source, reps: int, base_seed: int = 0, *,
             sigmoid: SigmoidSpec = ARCTAN, p_floor: float = P_FLOOR, alpha: float = 0.05,
             workers: int = 1, chunk_size: int = DEFAULT_CHUNK, trace_at=(), beta_at=(),
             record: bool = False) -> BatchResult:
    """Run ``reps`` independent replications of one design.

    Parameters
    ----------
    design : {"ftrl", "bernoulli", "oracle"}
        The adaptive design, the fair coin with zero predictors, or the
        infeasible Neyman allocation with least-squares predictors.
    source : PotentialOutcomeSequence or Ensemble
        A fixed sequence, or a random family redrawn for every replication.
    trace_at : iterable of int
        Steps ``t`` after which the online residual sums are recorded.
    beta_at : iterable of int
        Steps ``t`` whose ridge predictors (before the outcome) are recorded.
    record : bool
        Keep the full ``(reps, T)`` arrays of ``p``, ``z`` and predictions.
    """
    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}; expected one of {DESIGNS}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    jobs = [_Job(design, source, int(base_seed), a, min(a + chunk_size, reps), sigmoid,
                 p_floor, alpha, tuple(trace_at), tuple(beta_at), record)
            for a in range(0, reps, chunk_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]

    def cat(key):
        return np.concatenate([p[key] for p in parts])

    def total(key):
        out = np.zeros_like(parts[0][key])
        for p in parts:
            out = out + p[key]
        return out

    records = None
    if record:
        records = {k: np.concatenate([p["records"][k] for p in parts]) for k in parts[0]["records"]}
    return BatchResult(
        design=design, T=parts[0]["T"], d=parts[0]["d"], alpha=alpha,
        tau=cat("tau"), tau_hat=cat("tau_hat"), g_sum=cat("g_sum"), r_prob=cat("r_prob"),
        r_pred=cat("r_pred"), v_star_T=cat("v_star_T"), e2_1=cat("e2_1"), e2_0=cat("e2_0"),
        clamp_count=cat("clamp_count"), pbound_violations=cat("pbound_violations"),
        p_min=cat("p_min"), p_max=cat("p_max"),
        inv_p_sum=total("inv_p_sum"), inv_q_sum=total("inv_q_sum"),
        ahat1_trace=cat("ahat1_trace"), ahat0_trace=cat("ahat0_trace"),
        beta1_snap=cat("beta1_snap"), beta0_snap=cat("beta0_snap"),
        records=records,
    )


def mean_se(values) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
